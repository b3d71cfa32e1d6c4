"""Minimal binary PGM (P5) and PPM (P6) reader/writer.

Values are normalized to [0, 1] on load; 8-bit or 16-bit maxval supported.
No external imaging dependency.
"""

import numpy as np


def _read_header_tokens(data, count):
    """Read `count` whitespace-separated tokens, skipping # comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PNM header")
        ch = data[i:i + 1]
        if ch == b"#":
            j = data.find(b"\n", i)
            i = len(data) if j < 0 else j + 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1  # header ends after one whitespace byte


def read_pgm(path):
    """Load a binary PGM into a float array in [0, 1], shape (ny, nx)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM (magic {tokens[0]!r})")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"bad maxval {maxval}")
    raw = data[offset:]
    if maxval < 256:
        arr = np.frombuffer(raw[: nx * ny], dtype=np.uint8)
    else:
        arr = np.frombuffer(raw[: 2 * nx * ny], dtype=">u2")
    if arr.size != nx * ny:
        raise ValueError("truncated PGM payload")
    return arr.reshape(ny, nx).astype(np.float64) / maxval


def write_pgm(path, values, maxval=255):
    """Write floats in [0, 1] as binary PGM."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    if maxval < 256:
        payload = np.round(v * maxval).astype(np.uint8).tobytes()
    else:
        payload = np.round(v * maxval).astype(">u2").tobytes()
    ny, nx = v.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n{maxval}\n".encode("ascii"))
        fh.write(payload)


def write_ppm(path, rgb):
    """Write an (ny, nx, 3) float array in [0, 1] as binary PPM."""
    v = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    ny, nx, _ = v.shape
    payload = np.round(v * 255).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P6\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(payload)


def read_ppm(path):
    """Load a binary PPM into a float array in [0, 1], shape (ny, nx, 3)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != b"P6":
        raise ValueError(f"not a binary PPM (magic {tokens[0]!r})")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    arr = np.frombuffer(data[offset:offset + 3 * nx * ny], dtype=np.uint8)
    if arr.size != 3 * nx * ny:
        raise ValueError("truncated PPM payload")
    return arr.reshape(ny, nx, 3).astype(np.float64) / maxval
