"""Discrete phase-field energy on 2D grids and its alternating minimization.

The order parameter u is read only through the quotient metric d_G and the
distance to O(d), so jumps by a group element cost nothing and the energy is
invariant under arbitrary per-cell gauge changes u -> G u.  Sweeps alternate
one backtracked projected-gradient step on v (box [0, 1]) and one on u
(projected onto the Frobenius ball of radius sqrt(d)); each sweep decreases
the energy or leaves the field unchanged.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cellproblem import DamageModel, f_eval
from .errors import DomainError, GridMismatch
from .kernels_grid import (beta_frozen_energy, beta_frozen_grad, dist2_field,
                           grid_terms, pair_terms, v_energy, v_energy_grad)
from .pointgroup import separation_radius

_C1 = 1e-4
_T_MIN = 1e-20


@dataclass(frozen=True)
class EnergyParams:
    """Regularization parameters; lam = eps/delta_eps is the penalty ratio."""

    eps: float
    delta_eps: float
    m_eps: float
    damage: DamageModel = field(default_factory=DamageModel)
    gamma: float = 0.0

    def __post_init__(self):
        if self.eps <= 0 or self.delta_eps <= 0 or self.m_eps <= 0:
            raise ValueError("eps, delta_eps, m_eps must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @property
    def lam(self):
        return self.eps / self.delta_eps


def default_params(eps, lambda_ratio=1.0, damage=None, gamma=0.0):
    """Coupling defaults: delta_eps = eps/lambda, M_eps = eps^(-1/4)."""
    return EnergyParams(eps=eps, delta_eps=eps / lambda_ratio,
                        m_eps=eps ** -0.25,
                        damage=damage or DamageModel(), gamma=gamma)


@dataclass
class OrientationField:
    """Grid of d x d matrices; values[row, col] with spacing h."""

    values: np.ndarray  # (ny, nx, d, d)
    h: float

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 4 or self.values.shape[2] != self.values.shape[3]:
            raise ValueError("values must be (ny, nx, d, d)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite entries")

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1]

    @property
    def d(self):
        return self.values.shape[2]

    @classmethod
    def constant(cls, nx, ny, matrix, h=1.0):
        m = np.asarray(matrix, dtype=np.float64)
        vals = np.broadcast_to(m, (ny, nx) + m.shape).copy()
        return cls(values=vals, h=h)


@dataclass
class PhaseField:
    """Scalar damage field in [0, 1]; v = 1 means intact material."""

    values: np.ndarray  # (ny, nx)
    h: float

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be (ny, nx)")
        if np.any(self.values < -1e-12) or np.any(self.values > 1.0 + 1e-12):
            raise ValueError("v must lie in [0, 1]")

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1]

    @classmethod
    def constant(cls, nx, ny, value=1.0, h=1.0):
        return cls(values=np.full((ny, nx), float(value)), h=h)


@dataclass
class EnergyBreakdown:
    term_grad: float
    term_at: float
    term_pen: float
    term_fid: float

    @property
    def total(self):
        return self.term_grad + self.term_at + self.term_pen + self.term_fid


@dataclass
class TraceRow:
    stage: int
    iter: int
    term_grad: float
    term_at: float
    term_pen: float
    term_fid: float
    total: float


def f_eps_eval(s, params):
    """Truncated damage coefficient M_eps ^ sqrt(eps) f(s); f_eps(1) = M_eps."""
    if s < 0.0 or s > 1.0:
        raise DomainError(f"f_eps is defined on [0, 1], got {s}")
    if s >= 1.0:
        return params.m_eps
    return min(params.m_eps, math.sqrt(params.eps) * f_eval(s, params.damage))


def _check_grids(u, v):
    if (u.ny, u.nx) != (v.ny, v.nx) or u.h != v.h:
        raise GridMismatch(
            f"u grid {(u.ny, u.nx, u.h)} != v grid {(v.ny, v.nx, v.h)}")


def _fidelity_parts(u, group, params, image, lattice, margin, want_grad):
    if image is None or params.gamma == 0.0:
        return 0.0, None, 0, 0
    from .segmentation import _fidelity_raw
    val, grad, masked, total = _fidelity_raw(u, image, lattice, group, margin,
                                             want_grad=want_grad)
    return val, grad, masked, total


def energy_total(u, v, group, params, image=None, lattice=None, margin=None):
    """Per-term breakdown of the grid energy (fidelity included if an image
    and lattice are attached and gamma > 0)."""
    _check_grids(u, v)
    d2r, _, d2d, _ = pair_terms(u.values, group.elements)
    tg, ta, tp = grid_terms(u.values, v.values, d2r, d2d, u.h, params.eps,
                            params.delta_eps, params.m_eps,
                            params.damage.ell, params.damage.v_ceiling)
    tf = 0.0
    if image is not None and params.gamma > 0.0:
        fval, _, _, _ = _fidelity_parts(u, group, params, image, lattice, margin, False)
        tf = params.gamma * fval
    return EnergyBreakdown(term_grad=float(tg), term_at=float(ta),
                           term_pen=float(tp), term_fid=float(tf))


def _pairsum(u, group):
    d2r, _, d2d, _ = pair_terms(u.values, group.elements)
    ny, nx = u.values.shape[:2]
    acc = np.zeros((ny, nx))
    if nx > 1:
        acc[:, :-1] += d2r[:, : nx - 1]
    if ny > 1:
        acc[:-1, :] += d2d[: ny - 1, :]
    return acc


def minimize_step_v(u, v, group, params, opts=None):
    """One projected-gradient step on v with Armijo halving; v stays in [0, 1].

    The pair distances depend only on u, so the restricted energy is exact
    (no majorization).  A failed search returns the input unchanged with
    info['failed'] = True.
    """
    _check_grids(u, v)
    opts = opts if opts is not None else {}
    ps = opts.get("pairsum")
    if ps is None:
        ps = _pairsum(u, group)
    args = (ps, u.h, params.eps, params.delta_eps, params.m_eps,
            params.damage.ell, params.damage.v_ceiling)
    e, gv = v_energy_grad(v.values, *args)
    t = opts.get("step_v", 1e-2)
    t = min(t * 4.0, 1e6)
    vv = v.values
    while t > _T_MIN:
        vt = np.clip(vv - t * gv, 0.0, 1.0)
        et = v_energy(vt, *args)
        slope = float((gv * (vt - vv)).sum())
        if np.isfinite(et) and slope < 0.0 and et <= e + _C1 * slope:
            opts["step_v"] = t
            return PhaseField(values=vt, h=v.h), {"energy": float(et), "failed": False}
        t *= 0.5
    return v, {"energy": float(e), "failed": True}


def _ball_project(values, d):
    nrm = np.sqrt((values ** 2).sum(axis=(-2, -1)))
    scale = np.minimum(1.0, math.sqrt(d) / np.maximum(nrm, 1e-300))
    return values * scale[..., None, None]


def minimize_step_beta(u, v, group, params, opts=None, image=None, lattice=None,
                       margin=None, pinned=None):
    """One projected-gradient step on u with the active orbit elements frozen.

    d_G^2 is a minimum of smooth functions; freezing the argmin inside the
    line search majorizes the true energy, so an accepted step decreases it.
    Candidates are projected onto the ball |u| <= sqrt(d) (truncation never
    increases any term but the fidelity, which is evaluated explicitly).
    """
    _check_grids(u, v)
    opts = opts if opts is not None else {}
    elems = group.elements
    _, argr, _, argd = pair_terms(u.values, elems)
    feps2 = _feps2_field(v.values, params)
    e_q, gu = beta_frozen_grad(u.values, feps2, elems, argr, argd, u.h,
                               params.delta_eps)
    fval, fgrad, masked, total = _fidelity_parts(u, group, params, image,
                                                 lattice, margin, True)
    e = e_q + params.gamma * fval
    if fgrad is not None:
        gu = gu + params.gamma * fgrad
    if pinned is not None:
        gu[pinned] = 0.0
    t = opts.get("step_beta", 1e-2)
    t = min(t * 4.0, 1e6)
    uv = u.values
    d = u.d
    while t > _T_MIN:
        ut = _ball_project(uv - t * gu, d)
        if pinned is not None:
            ut[pinned] = uv[pinned]
        et = beta_frozen_energy(ut, feps2, elems, argr, argd, u.h, params.delta_eps)
        if image is not None and params.gamma > 0.0:
            fv, _, _, _ = _fidelity_parts(
                OrientationField(values=ut, h=u.h), group, params, image,
                lattice, margin, False)
            et += params.gamma * fv
        slope = float((gu * (ut - uv)).sum())
        if np.isfinite(et) and slope < 0.0 and et <= e + _C1 * slope:
            opts["step_beta"] = t
            return (OrientationField(values=ut, h=u.h),
                    {"energy": float(et), "failed": False,
                     "masked": masked, "total_cells": total})
        t *= 0.5
    return u, {"energy": float(e), "failed": True, "masked": masked,
               "total_cells": total}


def _feps2_field(v, params):
    cap = params.damage.v_ceiling
    vc = np.minimum(v, cap)
    uu = 1.0 - vc
    f = np.minimum(np.sqrt(params.eps) * params.damage.ell * (-np.log(uu)) / uu,
                   params.m_eps)
    f = np.where(v >= 1.0, params.m_eps, f)
    return f * f


@dataclass(frozen=True)
class Coupling:
    """How delta_eps and M_eps follow eps along a continuation schedule."""

    lambda_ratio: float = 1.0
    m_exponent: float = -0.25
    m_scale: float = 1.0

    def params_at(self, eps, damage, gamma):
        return EnergyParams(eps=eps, delta_eps=eps / self.lambda_ratio,
                            m_eps=self.m_scale * eps ** self.m_exponent,
                            damage=damage, gamma=gamma)


def coupling_from(params):
    """Read the coupling off a template EnergyParams instance."""
    return Coupling(lambda_ratio=params.lam, m_exponent=-0.25,
                    m_scale=params.m_eps * params.eps ** 0.25)


@dataclass
class AlternateResult:
    u: OrientationField
    v: PhaseField
    trace: list
    converged: bool
    iters: int
    masked_fraction: float = 0.0


def alternate_minimize(u0, v0, group, params, schedule, iters_per_stage=500,
                       tol=1e-7, image=None, lattice=None, margin=None,
                       pinned=None, coupling=None):
    """Alternating v/u sweeps with eps-continuation, warm-starting stages.

    The schedule must be decreasing; each stage runs until the relative
    energy change drops below tol or the iteration cap.  The trace is
    nonincreasing within each stage by the sweeps' line-search contracts.
    """
    sched = [float(e) for e in schedule]
    if not sched or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("schedule must be a decreasing list of eps values")
    coup = coupling or coupling_from(params)
    u, v = u0, v0
    trace = []
    opts = {}
    converged = True
    total_iters = 0
    masked_fraction = 0.0
    for stage, eps in enumerate(sched):
        p = coup.params_at(eps, params.damage, params.gamma)
        prev = None
        stage_conv = False
        for it in range(iters_per_stage):
            opts.pop("pairsum", None)
            v, _ = minimize_step_v(u, v, group, p, opts)
            u, info_b = minimize_step_beta(u, v, group, p, opts, image=image,
                                           lattice=lattice, margin=margin,
                                           pinned=pinned)
            bd = energy_total(u, v, group, p, image=image, lattice=lattice,
                              margin=margin)
            trace.append(TraceRow(stage=stage, iter=it, term_grad=bd.term_grad,
                                  term_at=bd.term_at, term_pen=bd.term_pen,
                                  term_fid=bd.term_fid, total=bd.total))
            total_iters += 1
            if info_b.get("total_cells"):
                masked_fraction = info_b["masked"] / info_b["total_cells"]
            if prev is not None:
                denom = max(abs(prev), 1e-30)
                if abs(prev - bd.total) <= tol * denom:
                    stage_conv = True
                    break
            prev = bd.total
        converged = converged and stage_conv
    return AlternateResult(u=u, v=v, trace=trace, converged=converged,
                           iters=total_iters, masked_fraction=masked_fraction)


def lift_field(u, group, jump_tol=None):
    """Align stored representatives by breadth-first region growing.

    Each newly visited cell is replaced by the orbit element closest (in
    Frobenius norm) to its already-aligned BFS parent; ties keep the first
    element in group order, which makes the operation idempotent.  Jump
    edges are the grid edges whose quotient distance exceeds jump_tol (the
    discrete jump set; alignment cannot remove those).
    """
    if jump_tol is None:
        r0 = separation_radius(group)
        jump_tol = min(0.25, r0 / 2.0) if math.isfinite(r0) else 0.25
    ny, nx = u.ny, u.nx
    elems = group.elements
    vals = u.values
    aligned = vals.copy()
    visited = np.zeros((ny, nx), dtype=bool)
    from collections import deque
    for seed in range(ny * nx):
        sr, sc = divmod(seed, nx)
        if visited[sr, sc]:
            continue
        visited[sr, sc] = True
        queue = deque([(sr, sc)])
        while queue:
            r, c = queue.popleft()
            parent = aligned[r, c]
            for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < ny and 0 <= cc < nx and not visited[rr, cc]:
                    visited[rr, cc] = True
                    cand = elems @ vals[rr, cc]
                    dist = np.sqrt(((parent - cand) ** 2).sum(axis=(1, 2)))
                    aligned[rr, cc] = cand[int(np.argmin(dist))]
                    queue.append((rr, cc))
    jump_edges = []
    d2r, _, d2d, _ = pair_terms(vals, elems)
    for r in range(ny):
        for c in range(nx - 1):
            if math.sqrt(d2r[r, c]) > jump_tol:
                jump_edges.append(((r, c), (r, c + 1)))
    for r in range(ny - 1):
        for c in range(nx):
            if math.sqrt(d2d[r, c]) > jump_tol:
                jump_edges.append(((r, c), (r + 1, c)))
    return OrientationField(values=aligned, h=u.h), jump_edges


def truncate_field(u):
    """Project every cell onto the ball |u| <= sqrt(d); never raises energy."""
    return OrientationField(values=_ball_project(u.values, u.d), h=u.h)
