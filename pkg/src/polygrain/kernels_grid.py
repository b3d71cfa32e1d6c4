"""Hot kernels for the 2D grid energy.

Grid layout: fields are (ny, nx, d, d) for the order parameter u and
(ny, nx) for the phase field v; forward differences pair each cell with
its right and down neighbors, and the damage factor of a pair is taken
from the lower-index ("left") node.  All sums carry the cell measure
h^2, so the gradient term is sum feps^2(v) * d_G^2 (the 1/h^2 of the
difference quotient cancels against the measure).

Both backends implement the same contracts; see ``backend``.
"""

import numpy as np

from .backend import USING_NUMBA, jit

_TINY = 1e-300


# ---------------------------------------------------------------------------
# loop implementations

def _dist2_grad_cell(b, d):
    if d == 2:
        fro2 = b[0, 0] ** 2 + b[0, 1] ** 2 + b[1, 0] ** 2 + b[1, 1] ** 2
        det = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
        adet = det if det >= 0.0 else -det
        ssum = np.sqrt(fro2 + 2.0 * adet)
        dist2 = fro2 - 2.0 * ssum + 2.0
        if dist2 < 0.0:
            dist2 = 0.0
        g = np.empty((2, 2))
        if ssum > 1e-150:
            sgn = 1.0 if det >= 0.0 else -1.0
            g[0, 0] = 2.0 * b[0, 0] - 2.0 * (b[0, 0] + sgn * b[1, 1]) / ssum
            g[0, 1] = 2.0 * b[0, 1] - 2.0 * (b[0, 1] - sgn * b[1, 0]) / ssum
            g[1, 0] = 2.0 * b[1, 0] - 2.0 * (b[1, 0] - sgn * b[0, 1]) / ssum
            g[1, 1] = 2.0 * b[1, 1] - 2.0 * (b[1, 1] + sgn * b[0, 0]) / ssum
        else:
            for p in range(2):
                for q in range(2):
                    g[p, q] = 2.0 * b[p, q]
        return dist2, g
    u, s, vt = np.linalg.svd(b)
    dist2 = 0.0
    for k in range(d):
        dist2 += (s[k] - 1.0) ** 2
    polar = u @ vt
    return dist2, 2.0 * (b - polar)


def _pair_terms_loop(u, elems):
    ny, nx, d, _ = u.shape
    m = elems.shape[0]
    d2r = np.zeros((ny, max(nx - 1, 1)))
    argr = np.zeros((ny, max(nx - 1, 1)), dtype=np.int64)
    d2d = np.zeros((max(ny - 1, 1), nx))
    argd = np.zeros((max(ny - 1, 1), nx), dtype=np.int64)
    for r in range(ny):
        for c in range(nx - 1):
            best = 1e300
            barg = 0
            for k in range(m):
                s = 0.0
                for p in range(d):
                    for q in range(d):
                        gb = 0.0
                        for t in range(d):
                            gb += elems[k, p, t] * u[r, c + 1, t, q]
                        diff = u[r, c, p, q] - gb
                        s += diff * diff
                if s < best:
                    best = s
                    barg = k
            d2r[r, c] = best
            argr[r, c] = barg
    for r in range(ny - 1):
        for c in range(nx):
            best = 1e300
            barg = 0
            for k in range(m):
                s = 0.0
                for p in range(d):
                    for q in range(d):
                        gb = 0.0
                        for t in range(d):
                            gb += elems[k, p, t] * u[r + 1, c, t, q]
                        diff = u[r, c, p, q] - gb
                        s += diff * diff
                if s < best:
                    best = s
                    barg = k
            d2d[r, c] = best
            argd[r, c] = barg
    return d2r, argr, d2d, argd


def _feps2_loop(s, eps, meps, ell, cap):
    if s >= 1.0:
        return meps * meps
    sc = s if s < cap else cap
    uu = 1.0 - sc
    f = np.sqrt(eps) * ell * (-np.log(uu)) / uu
    if f > meps:
        f = meps
    return f * f


def _grid_terms_loop(u, v, d2r, d2d, h, eps, delta, meps, ell, cap):
    ny, nx, d, _ = u.shape
    cell = h * h
    term_grad = 0.0
    term_at = 0.0
    term_pen = 0.0
    for r in range(ny):
        for c in range(nx):
            fe2 = _feps2_loop(v[r, c], eps, meps, ell, cap)
            acc = 0.0
            if c + 1 < nx:
                acc += d2r[r, c]
            if r + 1 < ny:
                acc += d2d[r, c]
            term_grad += fe2 * acc
            term_at += (1.0 - v[r, c]) ** 2 / (4.0 * eps) * cell
            if c + 1 < nx:
                dv = v[r, c + 1] - v[r, c]
                term_at += eps * dv * dv
            if r + 1 < ny:
                dv = v[r + 1, c] - v[r, c]
                term_at += eps * dv * dv
            dist2, _ = _dist2_grad_cell(u[r, c], d)
            term_pen += dist2 * cell / delta
    return term_grad, term_at, term_pen


def _v_energy_loop(v, pairsum, h, eps, delta, meps, ell, cap):
    ny, nx = v.shape
    cell = h * h
    e = 0.0
    for r in range(ny):
        for c in range(nx):
            fe2 = _feps2_loop(v[r, c], eps, meps, ell, cap)
            e += fe2 * pairsum[r, c]
            e += (1.0 - v[r, c]) ** 2 / (4.0 * eps) * cell
            if c + 1 < nx:
                dv = v[r, c + 1] - v[r, c]
                e += eps * dv * dv
            if r + 1 < ny:
                dv = v[r + 1, c] - v[r, c]
                e += eps * dv * dv
    return e


def _v_energy_grad_loop(v, pairsum, h, eps, delta, meps, ell, cap):
    ny, nx = v.shape
    cell = h * h
    e = 0.0
    gv = np.zeros((ny, nx))
    sq = np.sqrt(eps)
    for r in range(ny):
        for c in range(nx):
            s = v[r, c]
            fe2 = _feps2_loop(s, eps, meps, ell, cap)
            e += fe2 * pairsum[r, c]
            # derivative of feps^2 where the sqrt(eps) f branch is active
            if s < 1.0:
                sc = s if s < cap else cap
                uu = 1.0 - sc
                fraw = sq * ell * (-np.log(uu)) / uu
                if fraw < meps and s < cap:
                    fp = sq * ell * (1.0 - np.log(uu)) / (uu * uu)
                    gv[r, c] += 2.0 * fraw * fp * pairsum[r, c]
            e += (1.0 - s) ** 2 / (4.0 * eps) * cell
            gv[r, c] += -(1.0 - s) / (2.0 * eps) * cell
            if c + 1 < nx:
                dv = v[r, c + 1] - v[r, c]
                e += eps * dv * dv
                gv[r, c] -= 2.0 * eps * dv
                gv[r, c + 1] += 2.0 * eps * dv
            if r + 1 < ny:
                dv = v[r + 1, c] - v[r, c]
                e += eps * dv * dv
                gv[r, c] -= 2.0 * eps * dv
                gv[r + 1, c] += 2.0 * eps * dv
    return e, gv


def _beta_frozen_energy_loop(u, feps2, elems, argr, argd, h, delta):
    ny, nx, d, _ = u.shape
    cell = h * h
    e = 0.0
    for r in range(ny):
        for c in range(nx):
            if c + 1 < nx:
                k = argr[r, c]
                s = 0.0
                for p in range(d):
                    for q in range(d):
                        gb = 0.0
                        for t in range(d):
                            gb += elems[k, p, t] * u[r, c + 1, t, q]
                        diff = u[r, c, p, q] - gb
                        s += diff * diff
                e += feps2[r, c] * s
            if r + 1 < ny:
                k = argd[r, c]
                s = 0.0
                for p in range(d):
                    for q in range(d):
                        gb = 0.0
                        for t in range(d):
                            gb += elems[k, p, t] * u[r + 1, c, t, q]
                        diff = u[r, c, p, q] - gb
                        s += diff * diff
                e += feps2[r, c] * s
            dist2, _ = _dist2_grad_cell(u[r, c], d)
            e += dist2 * cell / delta
    return e


def _beta_frozen_grad_loop(u, feps2, elems, argr, argd, h, delta):
    ny, nx, d, _ = u.shape
    cell = h * h
    e = 0.0
    gu = np.zeros((ny, nx, d, d))
    diff = np.empty((d, d))
    for r in range(ny):
        for c in range(nx):
            if c + 1 < nx:
                k = argr[r, c]
                s = 0.0
                for p in range(d):
                    for q in range(d):
                        gb = 0.0
                        for t in range(d):
                            gb += elems[k, p, t] * u[r, c + 1, t, q]
                        diff[p, q] = u[r, c, p, q] - gb
                        s += diff[p, q] * diff[p, q]
                e += feps2[r, c] * s
                w = 2.0 * feps2[r, c]
                for p in range(d):
                    for q in range(d):
                        gu[r, c, p, q] += w * diff[p, q]
                for p in range(d):
                    for q in range(d):
                        acc = 0.0
                        for t in range(d):
                            acc += elems[k, t, p] * diff[t, q]
                        gu[r, c + 1, p, q] -= w * acc
            if r + 1 < ny:
                k = argd[r, c]
                s = 0.0
                for p in range(d):
                    for q in range(d):
                        gb = 0.0
                        for t in range(d):
                            gb += elems[k, p, t] * u[r + 1, c, t, q]
                        diff[p, q] = u[r, c, p, q] - gb
                        s += diff[p, q] * diff[p, q]
                e += feps2[r, c] * s
                w = 2.0 * feps2[r, c]
                for p in range(d):
                    for q in range(d):
                        gu[r, c, p, q] += w * diff[p, q]
                for p in range(d):
                    for q in range(d):
                        acc = 0.0
                        for t in range(d):
                            acc += elems[k, t, p] * diff[t, q]
                        gu[r + 1, c, p, q] -= w * acc
            dist2, dg = _dist2_grad_cell(u[r, c], d)
            e += dist2 * cell / delta
            for p in range(d):
                for q in range(d):
                    gu[r, c, p, q] += dg[p, q] * cell / delta
    return e, gu


# ---------------------------------------------------------------------------
# vectorized numpy implementations

def _dist2_field_np(u):
    d = u.shape[-1]
    if d == 2:
        fro2 = (u ** 2).sum(axis=(-2, -1))
        det = u[..., 0, 0] * u[..., 1, 1] - u[..., 0, 1] * u[..., 1, 0]
        ssum = np.sqrt(fro2 + 2.0 * np.abs(det))
        dist2 = np.maximum(fro2 - 2.0 * ssum + 2.0, 0.0)
        sgn = np.where(det >= 0.0, 1.0, -1.0)
        adjt = np.empty_like(u)
        adjt[..., 0, 0] = u[..., 1, 1]
        adjt[..., 0, 1] = -u[..., 1, 0]
        adjt[..., 1, 0] = -u[..., 0, 1]
        adjt[..., 1, 1] = u[..., 0, 0]
        safe = np.maximum(ssum, 1e-150)
        grad = 2.0 * u - 2.0 * (u + sgn[..., None, None] * adjt) / safe[..., None, None]
        grad = np.where(ssum[..., None, None] > 1e-150, grad, 2.0 * u)
        return dist2, grad
    uu, s, vt = np.linalg.svd(u)
    dist2 = ((s - 1.0) ** 2).sum(axis=-1)
    return dist2, 2.0 * (u - uu @ vt)


def _pair_terms_np(u, elems):
    ny, nx, d, _ = u.shape
    if nx > 1:
        a_r, b_r = u[:, :-1], u[:, 1:]
        gb_r = np.einsum("kpt,yxtq->kyxpq", elems, b_r)
        d2_r = ((a_r[None] - gb_r) ** 2).sum(axis=(-2, -1))
        argr = d2_r.argmin(axis=0).astype(np.int64)
        d2r = np.take_along_axis(d2_r, argr[None], axis=0)[0]
    else:
        d2r = np.zeros((ny, 1))
        argr = np.zeros((ny, 1), dtype=np.int64)
    if ny > 1:
        a_d, b_d = u[:-1], u[1:]
        gb_d = np.einsum("kpt,yxtq->kyxpq", elems, b_d)
        d2_d = ((a_d[None] - gb_d) ** 2).sum(axis=(-2, -1))
        argd = d2_d.argmin(axis=0).astype(np.int64)
        d2d = np.take_along_axis(d2_d, argd[None], axis=0)[0]
    else:
        d2d = np.zeros((1, nx))
        argd = np.zeros((1, nx), dtype=np.int64)
    return d2r, argr, d2d, argd


def _feps2_np(v, eps, meps, ell, cap):
    vc = np.minimum(v, cap)
    uu = 1.0 - vc
    f = np.minimum(np.sqrt(eps) * ell * (-np.log(uu)) / uu, meps)
    f = np.where(v >= 1.0, meps, f)
    return f * f


def _grid_terms_np(u, v, d2r, d2d, h, eps, delta, meps, ell, cap):
    ny, nx = v.shape
    cell = h * h
    fe2 = _feps2_np(v, eps, meps, ell, cap)
    acc = np.zeros((ny, nx))
    if nx > 1:
        acc[:, :-1] += d2r[:, : nx - 1]
    if ny > 1:
        acc[:-1, :] += d2d[: ny - 1, :]
    term_grad = float((fe2 * acc).sum())
    term_at = float(((1.0 - v) ** 2 / (4.0 * eps) * cell).sum())
    if nx > 1:
        term_at += float((eps * (v[:, 1:] - v[:, :-1]) ** 2).sum())
    if ny > 1:
        term_at += float((eps * (v[1:, :] - v[:-1, :]) ** 2).sum())
    dist2, _ = _dist2_field_np(u)
    term_pen = float(dist2.sum() * cell / delta)
    return term_grad, term_at, term_pen


def _v_energy_np(v, pairsum, h, eps, delta, meps, ell, cap):
    cell = h * h
    fe2 = _feps2_np(v, eps, meps, ell, cap)
    e = float((fe2 * pairsum).sum())
    e += float(((1.0 - v) ** 2 / (4.0 * eps) * cell).sum())
    if v.shape[1] > 1:
        e += float((eps * (v[:, 1:] - v[:, :-1]) ** 2).sum())
    if v.shape[0] > 1:
        e += float((eps * (v[1:, :] - v[:-1, :]) ** 2).sum())
    return e


def _v_energy_grad_np(v, pairsum, h, eps, delta, meps, ell, cap):
    cell = h * h
    sq = np.sqrt(eps)
    vc = np.minimum(v, cap)
    uu = 1.0 - vc
    fraw = sq * (-np.log(uu)) / uu * 1.0
    fraw = fraw * ell
    f = np.minimum(fraw, meps)
    f = np.where(v >= 1.0, meps, f)
    e = float((f * f * pairsum).sum())
    active = (fraw < meps) & (v < cap) & (v < 1.0)
    fp = np.where(active, sq * ell * (1.0 - np.log(uu)) / (uu * uu), 0.0)
    gv = 2.0 * np.where(active, fraw, 0.0) * fp * pairsum
    e += float(((1.0 - v) ** 2 / (4.0 * eps) * cell).sum())
    gv += -(1.0 - v) / (2.0 * eps) * cell
    if v.shape[1] > 1:
        dv = v[:, 1:] - v[:, :-1]
        e += float((eps * dv * dv).sum())
        gv[:, :-1] -= 2.0 * eps * dv
        gv[:, 1:] += 2.0 * eps * dv
    if v.shape[0] > 1:
        dv = v[1:, :] - v[:-1, :]
        e += float((eps * dv * dv).sum())
        gv[:-1, :] -= 2.0 * eps * dv
        gv[1:, :] += 2.0 * eps * dv
    return e, gv


def _frozen_pairs_np(u, feps2, elems, argr, argd):
    ny, nx, d, _ = u.shape
    e = 0.0
    parts = []
    if nx > 1:
        g_r = elems[argr[:, : nx - 1]]
        gb = np.einsum("yxpt,yxtq->yxpq", g_r, u[:, 1:])
        diff_r = u[:, :-1] - gb
        e += float((feps2[:, : nx - 1] * (diff_r ** 2).sum(axis=(-2, -1))).sum())
        parts.append(("r", g_r, diff_r))
    if ny > 1:
        g_d = elems[argd[: ny - 1, :]]
        gb = np.einsum("yxpt,yxtq->yxpq", g_d, u[1:])
        diff_d = u[:-1] - gb
        e += float((feps2[: ny - 1, :] * (diff_d ** 2).sum(axis=(-2, -1))).sum())
        parts.append(("d", g_d, diff_d))
    return e, parts


def _beta_frozen_energy_np(u, feps2, elems, argr, argd, h, delta):
    cell = h * h
    e, _ = _frozen_pairs_np(u, feps2, elems, argr, argd)
    dist2, _ = _dist2_field_np(u)
    return e + float(dist2.sum() * cell / delta)


def _beta_frozen_grad_np(u, feps2, elems, argr, argd, h, delta):
    ny, nx, d, _ = u.shape
    cell = h * h
    e, parts = _frozen_pairs_np(u, feps2, elems, argr, argd)
    gu = np.zeros_like(u)
    for kind, g_k, diff in parts:
        if kind == "r":
            w = 2.0 * feps2[:, : nx - 1, None, None]
            gu[:, :-1] += w * diff
            gu[:, 1:] -= w * np.einsum("yxtp,yxtq->yxpq", g_k, diff)
        else:
            w = 2.0 * feps2[: ny - 1, :, None, None]
            gu[:-1] += w * diff
            gu[1:] -= w * np.einsum("yxtp,yxtq->yxpq", g_k, diff)
    dist2, dg = _dist2_field_np(u)
    e += float(dist2.sum() * cell / delta)
    gu += dg * cell / delta
    return e, gu


# ---------------------------------------------------------------------------
# dispatch

if USING_NUMBA:
    _dist2_grad_cell = jit(_dist2_grad_cell)
    _feps2_loop = jit(_feps2_loop)
    pair_terms = jit(_pair_terms_loop)
    grid_terms = jit(_grid_terms_loop)
    v_energy = jit(_v_energy_loop)
    v_energy_grad = jit(_v_energy_grad_loop)
    beta_frozen_energy = jit(_beta_frozen_energy_loop)
    beta_frozen_grad = jit(_beta_frozen_grad_loop)
else:
    pair_terms = _pair_terms_np
    grid_terms = _grid_terms_np
    v_energy = _v_energy_np
    v_energy_grad = _v_energy_grad_np
    beta_frozen_energy = _beta_frozen_energy_np
    beta_frozen_grad = _beta_frozen_grad_np

dist2_field = _dist2_field_np

# numpy references for parity tests and the benchmark
pair_terms_numpy = _pair_terms_np
grid_terms_numpy = _grid_terms_np
v_energy_numpy = _v_energy_np
v_energy_grad_numpy = _v_energy_grad_np
beta_frozen_energy_numpy = _beta_frozen_energy_np
beta_frozen_grad_numpy = _beta_frozen_grad_np
