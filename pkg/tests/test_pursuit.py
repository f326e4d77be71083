"""Selection algorithms: recovery, monotonicity, baselines, reports."""

import json

import numpy as np
import pytest

from trajselect import (
    PursuitConfig,
    gen_duplicated_instance,
    gen_sparse_instance,
    iter_cosamp,
    omp_select,
    random_select,
    selection_to_report,
    solve_nnls,
    top_k_select,
    validate_selection,
)
from trajselect.pursuit import compute_residual, prune_to_budget, solve_support, top_indices


def _planted(seed, **kw):
    args = dict(n_samples=40, m=24, sparsity=4)
    args.update(kw)
    return gen_sparse_instance(seed=seed, **args)


class TestTopIndices:
    def test_orders_by_value_then_index(self):
        vals = np.array([1.0, 3.0, 3.0, 2.0, 3.0])
        np.testing.assert_array_equal(top_indices(vals, 3), [1, 2, 4])
        np.testing.assert_array_equal(top_indices(vals, 5), [1, 2, 4, 3, 0])

    def test_k_zero(self):
        assert top_indices(np.array([1.0]), 0).size == 0


class TestPruneToBudget:
    def test_keeps_largest_positive_weights(self):
        t_ind = np.array([3, 7, 11, 15])
        w = np.array([0.1, 2.0, 0.0, 1.0])
        proxy = np.zeros(20)
        kept = prune_to_budget(t_ind, w, 2, proxy)
        np.testing.assert_array_equal(kept, [7, 15])

    def test_pads_from_proxy_when_weights_vanish(self):
        t_ind = np.array([2, 5, 9])
        w = np.zeros(3)
        proxy = np.zeros(12)
        proxy[[5, 9]] = [3.0, 1.0]
        kept = prune_to_budget(t_ind, w, 2, proxy)
        np.testing.assert_array_equal(kept, [5, 9])

    def test_result_sorted_and_distinct(self):
        t_ind = np.array([8, 1, 4, 6])
        w = np.array([1.0, 1.0, 0.0, 0.0])
        proxy = np.arange(10, dtype=np.float64)
        kept = prune_to_budget(t_ind, w, 3, proxy)
        assert kept.size == 3
        assert np.all(np.diff(kept) > 0)
        assert {1, 8} <= set(kept.tolist())


class TestIterCosamp:
    @pytest.mark.parametrize("seed", range(8))
    def test_exact_recovery_noiseless(self, seed):
        inst = _planted(seed)
        sel = iter_cosamp(inst.as_design(), PursuitConfig(budget=4, iterations=8))
        np.testing.assert_array_equal(sel.indices, inst.support)
        order = np.argsort(inst.support)
        np.testing.assert_allclose(sel.weights, inst.weights[order], atol=1e-8)
        assert sel.final_residual <= 1e-8

    def test_history_monotone_nonincreasing(self):
        inst = _planted(0, noise_level=0.4)
        cfg = PursuitConfig(budget=4, iterations=10)
        sel = iter_cosamp(inst.as_design(), cfg)
        hist = np.asarray(sel.residual_history)
        assert hist.size == cfg.iterations + 1
        assert hist[0] == pytest.approx(np.linalg.norm(inst.b), rel=1e-15)
        assert np.all(np.diff(hist) <= 0.0)
        assert hist[-1] == sel.final_residual

    def test_first_iteration_matches_top_k_bitwise(self):
        # Iteration 1 is exactly the correlation/NNLS baseline, so the two
        # algorithms must agree to the last bit there.
        inst = _planted(3, noise_level=0.5)
        design = inst.as_design()
        cfg = PursuitConfig(budget=4, iterations=6)
        sel = iter_cosamp(design, cfg)
        base = top_k_select(design, cfg.budget)
        assert sel.residual_history[1] == base.final_residual
        np.testing.assert_array_equal(sel.per_iteration_supports[0], base.indices)

    @pytest.mark.parametrize("seed", range(8))
    def test_never_worse_than_top_k(self, seed):
        inst = _planted(seed, noise_level=0.6)
        design = inst.as_design()
        cfg = PursuitConfig(budget=4, iterations=10)
        assert (
            iter_cosamp(design, cfg).final_residual
            <= top_k_select(design, cfg.budget).final_residual + 1e-12
        )

    def test_selects_one_index_per_duplicate_group(self):
        inst = gen_duplicated_instance(seed=0)
        design = inst.as_design()
        sel = iter_cosamp(design, PursuitConfig(budget=len(inst.groups), iterations=10))
        for group in inst.groups:
            assert len(set(sel.indices.tolist()) & set(group)) == 1
        base = top_k_select(design, len(inst.groups))
        assert sel.final_residual < base.final_residual

    def test_pool_clamp_flag(self):
        inst = _planted(1, n_samples=7, m=6, sparsity=2)
        sel = iter_cosamp(inst.as_design(), PursuitConfig(budget=4, iterations=3))
        assert sel.pool_clamped
        sel2 = iter_cosamp(inst.as_design(), PursuitConfig(budget=2, iterations=3))
        assert not sel2.pool_clamped

    def test_target_literal_mode(self):
        inst = _planted(2, noise_level=0.3)
        cfg = PursuitConfig(budget=4, iterations=6, correlation_mode="target_literal")
        sel = iter_cosamp(inst.as_design(), cfg)
        hist = np.asarray(sel.residual_history)
        assert np.all(np.diff(hist) <= 0.0)
        assert validate_selection(sel, inst.a.shape[1]) == []

    def test_budget_equal_to_n(self):
        inst = _planted(4, n_samples=6, m=8, sparsity=2)
        sel = iter_cosamp(inst.as_design(), PursuitConfig(budget=6, iterations=3))
        assert sel.indices.size == 6
        assert sel.final_residual <= 1e-8

    def test_budget_larger_than_n_rejected(self):
        inst = _planted(5, n_samples=6, m=8, sparsity=2)
        with pytest.raises(ValueError, match="budget"):
            iter_cosamp(inst.as_design(), PursuitConfig(budget=7, iterations=3))

    def test_weights_nonnegative_and_support_sorted(self):
        inst = _planted(6, noise_level=0.8)
        sel = iter_cosamp(inst.as_design(), PursuitConfig(budget=5, iterations=8))
        assert np.all(sel.weights >= 0.0)
        assert np.all(np.diff(sel.indices) > 0)
        assert sel.indices.size == 5

    def test_deterministic(self):
        inst = _planted(7, noise_level=0.5)
        cfg = PursuitConfig(budget=4, iterations=8)
        a = iter_cosamp(inst.as_design(), cfg)
        b = iter_cosamp(inst.as_design(), cfg)
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.residual_history == b.residual_history


class TestBaselines:
    def test_top_k_is_correlation_then_nnls(self):
        inst = _planted(0, noise_level=0.2)
        design = inst.as_design()
        sel = top_k_select(design, 4)
        proxy = design.a.T @ design.b
        expect = np.sort(top_indices(proxy, 4))
        np.testing.assert_array_equal(sel.indices, expect)
        w, rnorm, _, _ = solve_support(design.a, design.b, expect, 1e-10, 3000)
        assert sel.final_residual == rnorm
        np.testing.assert_array_equal(sel.weights, w)

    def test_omp_history_and_monotonicity(self):
        inst = _planted(1, noise_level=0.3)
        sel = omp_select(inst.as_design(), 5)
        hist = np.asarray(sel.residual_history)
        assert hist.size == 6
        assert np.all(np.diff(hist) <= 1e-12)
        assert sel.indices.size == 5

    @pytest.mark.parametrize("seed", range(4))
    def test_omp_exact_recovery_noiseless(self, seed):
        inst = _planted(seed)
        sel = omp_select(inst.as_design(), 4)
        np.testing.assert_array_equal(sel.indices, inst.support)
        assert sel.final_residual <= 1e-8

    def test_random_select_is_seeded(self):
        inst = _planted(2)
        design = inst.as_design()
        a = random_select(design, 5, seed=11)
        b = random_select(design, 5, seed=11)
        c = random_select(design, 5, seed=12)
        np.testing.assert_array_equal(a.indices, b.indices)
        assert not np.array_equal(a.indices, c.indices)
        assert a.indices.size == 5
        assert np.all(np.diff(a.indices) > 0)

    def test_random_select_weights_are_nnls(self):
        inst = _planted(3)
        design = inst.as_design()
        sel = random_select(design, 4, seed=0)
        w, rnorm, _, _ = solve_support(design.a, design.b, sel.indices, 1e-10, 3000)
        np.testing.assert_array_equal(sel.weights, w)
        assert sel.final_residual == rnorm


class TestHelpers:
    def test_solve_support_residual_is_sqrt_dot(self):
        inst = _planted(0, noise_level=0.4)
        support = np.array([1, 5, 9])
        w, rnorm, r, res = solve_support(inst.a, inst.b, support, 1e-10, 3000)
        import math

        assert rnorm == math.sqrt(float(np.dot(r, r)))
        np.testing.assert_array_equal(r, inst.b - inst.a[:, support] @ w)
        assert res.converged

    def test_compute_residual(self):
        inst = _planted(1)
        idx = np.array([0, 3])
        w = np.array([0.5, 1.5])
        rnorm = compute_residual(inst.as_design(), idx, w)
        assert rnorm == pytest.approx(
            np.linalg.norm(inst.b - inst.a[:, idx] @ w), rel=1e-15
        )


class TestConfigAndValidation:
    def test_config_rejects_bad_values(self):
        with pytest.raises(ValueError):
            PursuitConfig(budget=0)
        with pytest.raises(ValueError):
            PursuitConfig(budget=3, iterations=0)
        with pytest.raises(ValueError):
            PursuitConfig(budget=3, correlation_mode="backwards")
        with pytest.raises(ValueError):
            PursuitConfig(budget=3, nnls_tol=-1.0)
        with pytest.raises(ValueError):
            PursuitConfig(budget=3, tie_break="random")

    def test_validate_selection_flags_corruption(self):
        inst = _planted(0)
        design = inst.as_design()
        sel = iter_cosamp(design, PursuitConfig(budget=4, iterations=4))
        assert validate_selection(sel, design.n_samples) == []
        sel.weights[0] = -1.0
        problems = validate_selection(sel, design.n_samples)
        assert any("negative" in p for p in problems)

    def test_report_is_json_ready(self):
        inst = _planted(1, noise_level=0.2)
        design = inst.as_design()
        sel = iter_cosamp(design, PursuitConfig(budget=4, iterations=5))
        report = selection_to_report(sel)
        text = json.dumps(report)
        back = json.loads(text)
        assert back["algorithm"] == "gtp"
        assert back["budget"] == 4
        assert back["indices"] == sel.indices.tolist()
        assert back["final_residual"] == sel.final_residual
        assert len(back["residual_history"]) == 6
        assert back["config"]["correlation_mode"] == "residual"

    def test_report_maps_sample_ids(self):
        inst = _planted(2)
        design = inst.as_design()
        design.sample_ids = [f"s-{i:03d}" for i in range(design.n_samples)]
        sel = iter_cosamp(design, PursuitConfig(budget=3, iterations=3))
        report = selection_to_report(sel)
        assert report["sample_ids"] == [f"s-{i:03d}" for i in sel.indices]
