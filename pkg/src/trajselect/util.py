"""Shared low-level helpers: binary string tables, atomic writes, digests."""

import hashlib
import os
import struct
import tempfile


def write_string_table(fh, strings):
    """Append a length-prefixed UTF-8 string table: u32 count, then
    (u32 byte-length, bytes) per entry, all little-endian."""
    fh.write(struct.pack("<I", len(strings)))
    for s in strings:
        raw = s.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)


def read_string_table(buf, offset):
    """Parse a string table from ``buf`` at ``offset``; returns (strings, new offset)."""
    (count,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    out = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        out.append(bytes(buf[offset:offset + n]).decode("utf-8"))
        offset += n
    return out, offset


def string_table_size(strings):
    return 4 + sum(4 + len(s.encode("utf-8")) for s in strings)


def atomic_write_bytes(path, payload):
    """Write bytes to ``path`` via a temp file + rename so readers never see
    a partial file."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()
