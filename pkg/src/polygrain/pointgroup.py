"""Finite point groups G in O(d) and the quotient metric d_G.

A group is stored as an ordered stack of d x d matrices, identity first.
Orientations are compared through the quotient metric

    d_G(a, b) = min over G in the group of ||a - G b||_F,

which is the distance between the orbits {G a} and {G b}.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, GroupTooLarge, NotOrthogonal

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ORDER = 256


def _as_matrix(a, d=None):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if d is not None and m.shape[0] != d:
        raise DimensionMismatch(f"expected a {d}x{d} matrix, got {m.shape[0]}x{m.shape[0]}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _check_orthogonal(m, tol):
    d = m.shape[0]
    defect = np.linalg.norm(m.T @ m - np.eye(d))
    if defect > tol:
        raise NotOrthogonal(f"||E^T E - I||_F = {defect:.3e} exceeds tol {tol:.1e}")


@dataclass(frozen=True)
class PointGroup:
    """Finite subgroup of O(d); immutable, safe to share across threads."""

    d: int
    elements: np.ndarray  # (order, d, d), identity first
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        elems = np.asarray(self.elements, dtype=np.float64)
        if elems.ndim != 3 or elems.shape[1:] != (self.d, self.d):
            raise DimensionMismatch(f"elements must be (order, {self.d}, {self.d})")
        elems = np.ascontiguousarray(elems)
        elems.setflags(write=False)
        object.__setattr__(self, "elements", elems)
        ident = np.eye(self.d)
        for e in elems:
            _check_orthogonal(e, self.tol)
        if np.linalg.norm(elems[0] - ident) > self.tol:
            raise ValueError("elements[0] must be the identity")
        self._check_closure()

    def _check_closure(self):
        elems = self.elements
        m = len(elems)
        flat = elems.reshape(m, -1)
        # pairwise separation guarantees dedup below was sound
        for i in range(m):
            for j in range(i + 1, m):
                if np.linalg.norm(flat[i] - flat[j]) <= 4 * self.tol:
                    raise ValueError("group elements are not separated by 4*tol")
        for i in range(m):
            for j in range(m):
                p = elems[i] @ elems[j]
                if np.min(np.linalg.norm(flat - p.reshape(-1), axis=1)) > self.tol:
                    raise ValueError("element set is not closed under multiplication")
            if np.min(np.linalg.norm(flat - elems[i].T.reshape(-1), axis=1)) > self.tol:
                raise ValueError("element set does not contain all inverses")

    @property
    def order(self):
        return len(self.elements)

    def __len__(self):
        return len(self.elements)


def generate(generators, d, tol=DEFAULT_TOL, max_order=DEFAULT_MAX_ORDER):
    """Close {I} plus the generators under multiplication (breadth-first).

    Element order is deterministic: identity, then new products in the order
    the closure discovers them.  Raises GroupTooLarge when the closure grows
    past max_order, which signals a non-finite or ill-conditioned generator
    set.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    gens = [_as_matrix(g, d) for g in generators]
    for g in gens:
        _check_orthogonal(g, tol)
    elems = [np.eye(d)]
    frontier = [np.eye(d)]

    def _known(p):
        return any(np.linalg.norm(p - e) <= tol for e in elems)

    for g in gens:
        if not _known(g):
            elems.append(g)
            frontier.append(g)
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                for p in (a @ g, g @ a):
                    if not _known(p):
                        elems.append(p)
                        nxt.append(p)
                        if len(elems) > max_order:
                            raise GroupTooLarge(
                                f"closure exceeded max_order={max_order}")
        frontier = nxt
    return PointGroup(d=d, elements=np.array(elems), tol=tol)


def rotation2(theta):
    """2D rotation by theta radians."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def named_group(name, tol=DEFAULT_TOL):
    """Built-in catalogue: trivial, cN / dN for d=2 (N <= 12), cubic (d=3).

    cN is the cyclic rotation group of order N, dN the dihedral group of
    order 2N (adds the mirror diag(1, -1)), cubic the 24 rotations of the
    cube built by closure from two 90-degree axis rotations.
    """
    key = name.strip().lower()
    if key in ("trivial", "c1", "id"):
        return generate([], 2, tol=tol)
    if key.startswith(("c", "d")) and key[1:].isdigit():
        n = int(key[1:])
        if not 1 <= n <= 12:
            raise ValueError(f"named cyclic/dihedral groups support n <= 12, got {n}")
        gens = [rotation2(2 * math.pi / n)]
        if key[0] == "d":
            gens.append(np.diag([1.0, -1.0]))
        return generate(gens, 2, tol=tol)
    if key in ("cubic", "o", "cubic24"):
        rx = np.array([[1.0, 0, 0], [0, 0, -1.0], [0, 1.0, 0]])
        rz = np.array([[0, -1.0, 0], [1.0, 0, 0], [0, 0, 1.0]])
        return generate([rx, rz], 3, tol=tol)
    raise ValueError(f"unknown group name {name!r}")


def quotient_distance(group, a, b):
    """min over G of ||a - G b||_F; zero iff a lies in the orbit of b."""
    a = _as_matrix(a, group.d)
    b = _as_matrix(b, group.d)
    prods = group.elements @ b
    return float(np.min(np.sqrt(((a - prods) ** 2).sum(axis=(1, 2)))))


def orbit(group, a):
    """{G a} in the group's element order."""
    a = _as_matrix(a, group.d)
    return group.elements @ a


def canonical_rep(group, a):
    """Deterministic orbit representative: lexicographic min in row-major order.

    Constant on orbits and idempotent.  For signed-permutation groups (cN with
    n in {1,2,4}, dN likewise, cubic) the agreement across orbit members is
    bit-exact because products only permute entries and flip signs.
    """
    orb = orbit(group, a).reshape(len(group), -1)
    idx = 0
    for i in range(1, len(orb)):
        ai, a0 = orb[i], orb[idx]
        for x, y in zip(ai, a0):
            if x < y:
                idx = i
                break
            if x > y:
                break
    return orb[idx].reshape(group.d, group.d).copy()


def separation_radius(group):
    """Quarter of the minimal distance between distinct elements.

    Below this radius the orbit map is injective, which is what makes
    region-growing lifting well-posed.  The trivial group returns +inf.
    """
    m = len(group)
    if m < 2:
        return math.inf
    flat = group.elements.reshape(m, -1)
    best = math.inf
    for i in range(m):
        for j in range(i + 1, m):
            best = min(best, float(np.linalg.norm(flat[i] - flat[j])))
    return 0.25 * best


def save_group(group, path):
    """Plain-text format: header `d=<d> order=<n>`, one element per line."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"d={group.d} order={group.order}\n")
        for e in group.elements:
            fh.write(" ".join(f"{x:.17g}" for x in e.reshape(-1)) + "\n")


def load_group(path, tol=DEFAULT_TOL):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        kv = dict(tok.split("=") for tok in header)
        d, order = int(kv["d"]), int(kv["order"])
        elems = []
        for _ in range(order):
            vals = [float(x) for x in fh.readline().split()]
            if len(vals) != d * d:
                raise ValueError("malformed group file: wrong entry count")
            elems.append(np.array(vals).reshape(d, d))
    return PointGroup(d=d, elements=np.array(elems), tol=tol)
