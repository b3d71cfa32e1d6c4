"""Image fidelity term, synthetic lattice images, and the end-to-end
segmentation pipeline.

The fidelity term compares a grayscale image with itself translated by the
back-rotated lattice vectors; it is minimized when the order parameter equals
the transpose of the local lattice orientation and is exactly invariant under
per-cell multiplication of u by group elements (the inner group sum
reindexes).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainTooSmall, UnsupportedDimension
from .kernels_fidelity import fidelity_kernel
from .matmanifold import _svd
from .phasefield import (OrientationField, PhaseField, alternate_minimize,
                         energy_total)
from .pointgroup import canonical_rep, quotient_distance
from .sharpinterface import GrainMap


@dataclass(frozen=True)
class Image:
    """Grayscale image; pixel (row r, col c) sits at physical (c*h, r*h)."""

    values: np.ndarray  # (ny, nx) in [0, 1]
    pixel_size: float = 1.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("values must be (ny, nx)")
        if v.min() < -1e-9 or v.max() > 1.0 + 1e-9:
            raise ValueError("values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class LatticeSpec:
    """Probe vectors (|v_k| <= sigma), their weights, and synthesis geometry."""

    basis: np.ndarray       # (K, 2), length units
    weights: np.ndarray     # (K,) positive
    sigma: float            # lattice spacing
    atom_radius: float = 1.5

    def __post_init__(self):
        b = np.ascontiguousarray(self.basis, dtype=np.float64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError("basis must be (K, 2)")
        if w.shape != (b.shape[0],) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per basis vector")
        if np.any(np.sqrt((b ** 2).sum(axis=1)) > self.sigma + 1e-12):
            raise ValueError("probe vectors must satisfy |v_k| <= sigma")
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "weights", w)

    @classmethod
    def square(cls, sigma, atom_radius=None):
        """Nearest-neighbor probes of a square lattice with spacing sigma."""
        basis = np.array([[sigma, 0.0], [0.0, sigma]])
        return cls(basis=basis, weights=np.ones(2), sigma=sigma,
                   atom_radius=atom_radius if atom_radius is not None else sigma / 5.0)


def required_margin(lat, h):
    """Pixel margin that keeps x + 2*sigma plus one interpolation pixel inside."""
    return int(math.ceil(2.0 * lat.sigma / h)) + 1


def _resolve_margin(image, lat, margin):
    h = image.pixel_size
    need = required_margin(lat, h)
    if margin is None:
        r0, r1 = need, image.ny - need
        c0, c1 = need, image.nx - need
    else:
        r0, r1, c0, c1 = margin
        if r0 < need or c0 < need or r1 > image.ny - need or c1 > image.nx - need:
            raise DomainTooSmall(
                f"margin domain must keep a {need}-pixel band (2*sigma) inside the image")
    if r1 <= r0 or c1 <= c0:
        raise DomainTooSmall("margin domain is empty")
    return r0, r1, c0, c1


def _probes(lat, group):
    """Stack G v_k over all k and G, with the matching weight per probe."""
    probes = []
    weights = []
    for vk, ak in zip(lat.basis, lat.weights):
        for g in group.elements:
            probes.append(g @ vk)
            weights.append(ak)
    return np.array(probes), np.array(weights)


def _fidelity_raw(u, image, lat, group, margin, want_grad):
    if u.d != 2:
        raise UnsupportedDimension("fidelity requires d = 2 (image-plane rotations)")
    if (u.ny, u.nx) != (image.ny, image.nx):
        raise ValueError("orientation field grid must match the image")
    r0, r1, c0, c1 = _resolve_margin(image, lat, margin)
    probes, weights = _probes(lat, group)
    val, grad, masked, total = fidelity_kernel(
        u.values, image.values, probes, weights, image.pixel_size,
        r0, r1, c0, c1, want_grad)
    return float(val), grad, int(masked), int(total)


def fidelity(u, image, lat, group, margin=None):
    """The data term FT(u); cells outside the well-conditioned mask contribute 0."""
    val, _, _, _ = _fidelity_raw(u, image, lat, group, margin, want_grad=False)
    return val


def fidelity_gradient(u, image, lat, group, margin=None):
    """Analytic gradient of FT through the bilinear interpolation chain rule."""
    _, grad, _, _ = _fidelity_raw(u, image, lat, group, margin, want_grad=True)
    return grad


def fidelity_masked_fraction(u, image, lat, group, margin=None):
    """Fraction of margin-domain cells excluded by the conditioning mask."""
    _, _, masked, total = _fidelity_raw(u, image, lat, group, margin, want_grad=False)
    return masked / total if total else 0.0


def synth_image(gm, lat, noise_sigma=0.0, seed=0):
    """Render Gaussian bumps at per-grain rotated lattice sites plus noise.

    Sites are generated as R_i (sigma Z^2) over a padded bounding box so the
    lattice stays periodic up to the image border; each site is kept if the
    pixel it falls in carries the grain's label (sites outside the image take
    the label of the clamped pixel).  Deterministic for a fixed seed.
    """
    h = gm.h
    ny, nx = gm.ny, gm.nx
    width, height = nx * h, ny * h
    pad = 3.0 * lat.sigma
    img = np.zeros((ny, nx))
    rad_px = max(1, int(math.ceil(3.0 * lat.atom_radius / h)))
    yy, xx = np.mgrid[-rad_px:rad_px + 1, -rad_px:rad_px + 1]
    for label in range(gm.n_grains):
        rot = gm.orientations[label][:2, :2]
        # lattice index ranges covering the padded box, conservative corners
        corners = np.array([[-pad, -pad], [width + pad, -pad],
                            [-pad, height + pad], [width + pad, height + pad]])
        lat_coords = corners @ rot / lat.sigma  # R^T p, row-vector form
        k0 = int(np.floor(lat_coords[:, 0].min())) - 1
        k1 = int(np.ceil(lat_coords[:, 0].max())) + 1
        m0 = int(np.floor(lat_coords[:, 1].min())) - 1
        m1 = int(np.ceil(lat_coords[:, 1].max())) + 1
        ks = np.arange(k0, k1 + 1)
        ms = np.arange(m0, m1 + 1)
        kk, mm = np.meshgrid(ks, ms, indexing="ij")
        pts = np.stack([kk.reshape(-1), mm.reshape(-1)], axis=1) * lat.sigma
        sites = pts @ rot.T
        keep = ((sites[:, 0] >= -pad) & (sites[:, 0] <= width + pad)
                & (sites[:, 1] >= -pad) & (sites[:, 1] <= height + pad))
        sites = sites[keep]
        cols = np.clip(np.round(sites[:, 0] / h).astype(int), 0, nx - 1)
        rows = np.clip(np.round(sites[:, 1] / h).astype(int), 0, ny - 1)
        mine = gm.labels[rows, cols] == label
        for sx, sy in sites[mine]:
            cc = int(round(sx / h))
            rr = int(round(sy / h))
            r_lo, r_hi = rr - rad_px, rr + rad_px + 1
            c_lo, c_hi = cc - rad_px, cc + rad_px + 1
            if r_hi <= 0 or c_hi <= 0 or r_lo >= ny or c_lo >= nx:
                continue
            py = (rr + yy) * h - sy
            px = (cc + xx) * h - sx
            bump = np.exp(-(px ** 2 + py ** 2) / (2.0 * lat.atom_radius ** 2))
            rs = slice(max(r_lo, 0), min(r_hi, ny))
            cs = slice(max(c_lo, 0), min(c_hi, nx))
            brs = slice(rs.start - r_lo, (2 * rad_px + 1) - (r_hi - rs.stop))
            bcs = slice(cs.start - c_lo, (2 * rad_px + 1) - (c_hi - cs.stop))
            img[rs, cs] += bump[brs, bcs]
    if noise_sigma > 0:
        rng = np.random.Generator(np.random.Philox(key=seed))
        img = img + noise_sigma * rng.standard_normal(img.shape)
    return Image(values=np.clip(img, 0.0, 1.0), pixel_size=h)


def extract_grain_map(u, v, group, v_threshold=0.5, angle_merge=math.radians(5.0),
                      merge_gap=2):
    """Partition {v > threshold} into grains by 4-connectivity, then merge
    nearby components whose mean orientations agree modulo the group.

    Per-grain orientation: canonical representative of the polar-projected
    arithmetic cell mean (the chordal mean on O(d), adequate for the small
    in-grain spread).
    """
    if not 0.0 < v_threshold < 1.0:
        raise ValueError("v_threshold must lie in (0, 1)")
    if not 0.0 < angle_merge < math.pi:
        raise ValueError("angle_merge must lie in (0, pi)")
    ny, nx = v.ny, v.nx
    above = v.values > v_threshold
    labels = np.full((ny, nx), -1, dtype=np.int64)
    comps = []
    from collections import deque
    for seed in range(ny * nx):
        r, c = divmod(seed, nx)
        if not above[r, c] or labels[r, c] >= 0:
            continue
        lab = len(comps)
        cells = []
        labels[r, c] = lab
        queue = deque([(r, c)])
        while queue:
            rr, cc = queue.popleft()
            cells.append((rr, cc))
            for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                r2, c2 = rr + dr, cc + dc
                if 0 <= r2 < ny and 0 <= c2 < nx and above[r2, c2] and labels[r2, c2] < 0:
                    labels[r2, c2] = lab
                    queue.append((r2, c2))
        comps.append(cells)

    def polar_mean(cells):
        m = np.zeros((u.d, u.d))
        for rr, cc in cells:
            m += u.values[rr, cc]
        m /= len(cells)
        uu, _, vt = _svd(m)
        return uu @ vt

    means = [polar_mean(cells) for cells in comps]

    # merge components that touch within merge_gap and agree modulo the group
    parent = list(range(len(comps)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    if len(comps) > 1 and merge_gap > 0:
        masks = [np.zeros((ny, nx), dtype=bool) for _ in comps]
        for lab, cells in enumerate(comps):
            for rr, cc in cells:
                masks[lab][rr, cc] = True
        dilated = []
        for mask in masks:
            dil = mask.copy()
            for _ in range(merge_gap):
                nxt = dil.copy()
                nxt[1:, :] |= dil[:-1, :]
                nxt[:-1, :] |= dil[1:, :]
                nxt[:, 1:] |= dil[:, :-1]
                nxt[:, :-1] |= dil[:, 1:]
                dil = nxt
            dilated.append(dil)
        for a in range(len(comps)):
            for b in range(a + 1, len(comps)):
                if not (dilated[a] & masks[b]).any():
                    continue
                dmin = quotient_distance(group, means[a], means[b])
                ang = 2.0 * math.asin(min(1.0, dmin / (2.0 * math.sqrt(2.0))))
                if ang < angle_merge:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)

    roots = sorted({find(a) for a in range(len(comps))})
    remap = {root: i for i, root in enumerate(roots)}
    final_labels = np.full((ny, nx), -1, dtype=np.int64)
    merged_cells = [[] for _ in roots]
    for lab, cells in enumerate(comps):
        g = remap[find(lab)]
        for rr, cc in cells:
            final_labels[rr, cc] = g
            merged_cells[g].append((rr, cc))
    orientations = np.array([canonical_rep(group, polar_mean(cells))
                             for cells in merged_cells]).reshape(len(roots), u.d, u.d)
    return GrainMap(labels=final_labels, orientations=orientations, h=u.h)


@dataclass
class SegmentResult:
    u: OrientationField
    v: PhaseField
    grain_map: GrainMap
    breakdown: object
    trace: list
    converged: bool
    masked_fraction: float


def segment(image, lat, group, params, schedule, iters_per_stage=400,
            tol=1e-6, v_threshold=0.5, angle_merge=math.radians(5.0)):
    """End-to-end pipeline: minimize the grid energy with the fidelity term
    attached (u starts at the identity, v at 1; the data term breaks the
    symmetry), then extract the grain map."""
    if lat.sigma < 2.0 * image.pixel_size:
        raise ValueError("lattice spacing must be at least 2 pixels")
    ny, nx = image.ny, image.nx
    h = image.pixel_size
    u0 = OrientationField.constant(nx, ny, np.eye(2), h=h)
    v0 = PhaseField.constant(nx, ny, 1.0, h=h)
    res = alternate_minimize(u0, v0, group, params, schedule,
                             iters_per_stage=iters_per_stage, tol=tol,
                             image=image, lattice=lat)
    bd = energy_total(res.u, res.v, group,
                      _stage_params(params, schedule[-1]),
                      image=image, lattice=lat)
    gmap = extract_grain_map(res.u, res.v, group, v_threshold=v_threshold,
                             angle_merge=angle_merge)
    return SegmentResult(u=res.u, v=res.v, grain_map=gmap, breakdown=bd,
                         trace=res.trace, converged=res.converged,
                         masked_fraction=res.masked_fraction)


def _stage_params(params, eps):
    from .phasefield import coupling_from
    return coupling_from(params).params_at(eps, params.damage, params.gamma)
