"""POLYGRAIN-FIELD binary container for grid fields.

ASCII header line `POLYGRAIN-FIELD v1 nx=<nx> ny=<ny> d=<d> h=<h>` followed
by little-endian float64 values, row-major, d*d per cell.  PhaseFields use
the marker d=0 and carry one value per cell.
"""

import numpy as np

from .phasefield import OrientationField, PhaseField

_MAGIC = "POLYGRAIN-FIELD v1"


def save_field(path, fld):
    if isinstance(fld, OrientationField):
        d = fld.d
        payload = fld.values
    elif isinstance(fld, PhaseField):
        d = 0
        payload = fld.values
    else:
        raise TypeError(f"cannot serialize {type(fld).__name__}")
    header = f"{_MAGIC} nx={fld.nx} ny={fld.ny} d={d} h={fld.h:.17g}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        if not header.startswith(_MAGIC):
            raise ValueError(f"bad magic in {path}")
        kv = dict(tok.split("=") for tok in header[len(_MAGIC):].split())
        nx, ny, d, h = int(kv["nx"]), int(kv["ny"]), int(kv["d"]), float(kv["h"])
        count = nx * ny * (d * d if d > 0 else 1)
        arr = np.frombuffer(fh.read(8 * count), dtype="<f8")
        if arr.size != count:
            raise ValueError("truncated field payload")
    if d == 0:
        return PhaseField(values=arr.reshape(ny, nx).copy(), h=h)
    return OrientationField(values=arr.reshape(ny, nx, d, d).copy(), h=h)
