"""Hot kernels for the 1D cell problem.

The reparametrization-invariant surface energy of a sampled path
(beta, v) on the uniform grid t_i = i/(n-1) is discretized with the
midpoint rule: derivatives by forward differences, pointwise factors
evaluated at interval midpoints reconstructed from node averages,

    E = h * sum_i sqrt((1-vm_i)^2 + 4*lam*qm_i) *
                  sqrt(f(vm_i)^2 * |db_i/h|^2 + (dv_i/h)^2),

where vm_i averages the two node values of v (capped at v_ceiling before
entering f) and qm_i averages the two node values of dist^2(beta, O(d)).
Because factors are taken at midpoints, f is never evaluated at the
boundary nodes where v = 1 exactly.

Two backends: numba-jitted loops and vectorized numpy, selected in
``backend``.  The descent driver (projected L-BFGS with Armijo halving
and box projection of the interior v nodes) is generated once from the
same source for both.
"""

import numpy as np

from .backend import USING_NUMBA, jit

_C1 = 1e-4          # Armijo slope fraction
_T_MIN = 1e-22      # line-search step underflow
_LBFGS_M = 8        # quasi-Newton memory pairs
_TINY = 1e-300


# ---------------------------------------------------------------------------
# loop implementations (numba-jittable)

def _node_dist2_loop(b, d):
    """dist^2 to O(d) and its gradient for one d x d matrix."""
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
    # generic path via SVD (d = 3 in practice)
    u, s, vt = np.linalg.svd(b)
    dist2 = 0.0
    for k in range(d):
        dist2 += (s[k] - 1.0) ** 2
    polar = u @ vt
    g = 2.0 * (b - polar)
    return dist2, g


def _cell_energy_loop(x, n, d, lam, ell, cap):
    dd = d * d
    h = 1.0 / (n - 1)
    beta = x[: n * dd].reshape(n, d, d)
    v = x[n * dd:]
    dist2 = np.empty(n)
    for i in range(n):
        dist2[i], _ = _node_dist2_loop(beta[i], d)
    e = 0.0
    for i in range(n - 1):
        vm = 0.5 * (v[i] + v[i + 1])
        vmc = vm if vm < cap else cap
        uu = 1.0 - vmc
        f = ell * (-np.log(uu)) / uu
        q = 0.5 * (dist2[i] + dist2[i + 1])
        w = (1.0 - vm) ** 2 + 4.0 * lam * q
        bp2 = 0.0
        for p in range(d):
            for r in range(d):
                dbe = beta[i + 1, p, r] - beta[i, p, r]
                bp2 += dbe * dbe
        bp2 /= h * h
        vp = (v[i + 1] - v[i]) / h
        s2 = f * f * bp2 + vp * vp
        e += h * np.sqrt(w) * np.sqrt(s2)
    return e


def _cell_energy_grad_loop(x, n, d, lam, ell, cap):
    dd = d * d
    h = 1.0 / (n - 1)
    beta = x[: n * dd].reshape(n, d, d)
    v = x[n * dd:]
    dist2 = np.empty(n)
    dgrad = np.empty((n, d, d))
    for i in range(n):
        dist2[i], dgrad[i] = _node_dist2_loop(beta[i], d)
    g = np.zeros(x.shape[0])
    gb = g[: n * dd].reshape(n, d, d)
    gv = g[n * dd:]
    e = 0.0
    for i in range(n - 1):
        vm = 0.5 * (v[i] + v[i + 1])
        vmc = vm if vm < cap else cap
        uu = 1.0 - vmc
        f = ell * (-np.log(uu)) / uu
        fp = 0.0 if vm >= cap else ell * (1.0 - np.log(uu)) / (uu * uu)
        q = 0.5 * (dist2[i] + dist2[i + 1])
        w = (1.0 - vm) ** 2 + 4.0 * lam * q
        bp2 = 0.0
        for p in range(d):
            for r in range(d):
                dbe = beta[i + 1, p, r] - beta[i, p, r]
                bp2 += dbe * dbe
        bp2 /= h * h
        vp = (v[i + 1] - v[i]) / h
        s2 = f * f * bp2 + vp * vp
        ws = np.sqrt(w)
        ss = np.sqrt(s2)
        e += h * ws * ss
        if ss > 1e-150 and ws > 1e-150:
            dvm = h * (ss * (-(1.0 - vm)) / ws + ws * f * fp * bp2 / ss)
            dvp = h * ws * vp / ss
            gv[i] += 0.5 * dvm - dvp / h
            gv[i + 1] += 0.5 * dvm + dvp / h
            dq = h * ss * 2.0 * lam / ws
            cb = ws * f * f / (ss * h)
            for p in range(d):
                for r in range(d):
                    dbe = beta[i + 1, p, r] - beta[i, p, r]
                    gb[i + 1, p, r] += cb * dbe + 0.5 * dq * dgrad[i + 1, p, r]
                    gb[i, p, r] += -cb * dbe + 0.5 * dq * dgrad[i, p, r]
    # boundary nodes are fixed
    for p in range(d):
        for r in range(d):
            gb[0, p, r] = 0.0
            gb[n - 1, p, r] = 0.0
    gv[0] = 0.0
    gv[n - 1] = 0.0
    return e, g


# ---------------------------------------------------------------------------
# vectorized numpy implementations

def _dist2_field_np(beta):
    """Batched dist^2 to O(d) with gradients, for (n, d, d) stacks."""
    d = beta.shape[-1]
    if d == 2:
        fro2 = (beta ** 2).sum(axis=(-2, -1))
        det = beta[..., 0, 0] * beta[..., 1, 1] - beta[..., 0, 1] * beta[..., 1, 0]
        ssum = np.sqrt(fro2 + 2.0 * np.abs(det))
        dist2 = np.maximum(fro2 - 2.0 * ssum + 2.0, 0.0)
        sgn = np.where(det >= 0.0, 1.0, -1.0)
        adjt = np.empty_like(beta)
        adjt[..., 0, 0] = beta[..., 1, 1]
        adjt[..., 0, 1] = -beta[..., 1, 0]
        adjt[..., 1, 0] = -beta[..., 0, 1]
        adjt[..., 1, 1] = beta[..., 0, 0]
        safe = np.maximum(ssum, 1e-150)
        grad = 2.0 * beta - 2.0 * (beta + sgn[..., None, None] * adjt) / safe[..., None, None]
        grad = np.where(ssum[..., None, None] > 1e-150, grad, 2.0 * beta)
        return dist2, grad
    u, s, vt = np.linalg.svd(beta)
    dist2 = ((s - 1.0) ** 2).sum(axis=-1)
    polar = u @ vt
    return dist2, 2.0 * (beta - polar)


def _f_np(vm, ell, cap):
    uu = 1.0 - np.minimum(vm, cap)
    return ell * (-np.log(uu)) / uu


def _cell_energy_np(x, n, d, lam, ell, cap):
    dd = d * d
    h = 1.0 / (n - 1)
    beta = x[: n * dd].reshape(n, d, d)
    v = x[n * dd:]
    dist2, _ = _dist2_field_np(beta)
    vm = 0.5 * (v[:-1] + v[1:])
    q = 0.5 * (dist2[:-1] + dist2[1:])
    w = (1.0 - vm) ** 2 + 4.0 * lam * q
    bp2 = ((beta[1:] - beta[:-1]) ** 2).sum(axis=(1, 2)) / h ** 2
    vp = (v[1:] - v[:-1]) / h
    f = _f_np(vm, ell, cap)
    s2 = f * f * bp2 + vp * vp
    return float(h * (np.sqrt(w) * np.sqrt(s2)).sum())


def _cell_energy_grad_np(x, n, d, lam, ell, cap):
    dd = d * d
    h = 1.0 / (n - 1)
    beta = x[: n * dd].reshape(n, d, d)
    v = x[n * dd:]
    dist2, dgrad = _dist2_field_np(beta)
    vm = 0.5 * (v[:-1] + v[1:])
    q = 0.5 * (dist2[:-1] + dist2[1:])
    w = (1.0 - vm) ** 2 + 4.0 * lam * q
    db = beta[1:] - beta[:-1]
    bp2 = (db ** 2).sum(axis=(1, 2)) / h ** 2
    vp = (v[1:] - v[:-1]) / h
    uu = 1.0 - np.minimum(vm, cap)
    f = ell * (-np.log(uu)) / uu
    fp = np.where(vm >= cap, 0.0, ell * (1.0 - np.log(uu)) / (uu * uu))
    s2 = f * f * bp2 + vp * vp
    ws = np.sqrt(w)
    ss = np.sqrt(s2)
    e = float(h * (ws * ss).sum())
    ok = (ss > 1e-150) & (ws > 1e-150)
    inv_ss = np.where(ok, 1.0 / np.maximum(ss, _TINY), 0.0)
    inv_ws = np.where(ok, 1.0 / np.maximum(ws, _TINY), 0.0)
    dvm = h * (ss * (-(1.0 - vm)) * inv_ws + ws * f * fp * bp2 * inv_ss)
    dvp = h * ws * vp * inv_ss
    gv = np.zeros(n)
    np.add.at(gv, np.arange(n - 1), 0.5 * dvm - dvp / h)
    np.add.at(gv, np.arange(1, n), 0.5 * dvm + dvp / h)
    dq = h * ss * 2.0 * lam * inv_ws
    coef = np.zeros(n)
    np.add.at(coef, np.arange(n - 1), 0.5 * dq)
    np.add.at(coef, np.arange(1, n), 0.5 * dq)
    gb = coef[:, None, None] * dgrad
    cb = (ws * f * f * inv_ss / h)[:, None, None] * db
    gb[1:] += cb
    gb[:-1] -= cb
    gb[0] = 0.0
    gb[-1] = 0.0
    gv[0] = 0.0
    gv[-1] = 0.0
    return e, np.concatenate([gb.reshape(-1), gv])


# ---------------------------------------------------------------------------
# descent driver (one source, wrapped per backend)

def _make_descend(energy, energy_grad, wrap):
    def descend(x0, n, d, lam, ell, cap, max_iters, grad_tol, stall_tol):
        """Projected L-BFGS with Armijo halving on the interior nodes.

        The interior v nodes are box-projected onto [0, cap]; boundary nodes
        never move.  Monotone by construction: every accepted step satisfies
        a sufficient-decrease condition.  Besides the gradient tolerance, a
        run stops once the relative energy decrease over a 200-iteration
        window falls below stall_tol (the valley has bottomed out).  Returns
        (x, energy, converged, iterations, projected-gradient norm).
        """
        ndof = x0.shape[0]
        nb = n * d * d
        m = _LBFGS_M
        x = x0.copy()
        # project the start into the box
        for i in range(nb + 1, ndof - 1):
            if x[i] < 0.0:
                x[i] = 0.0
            elif x[i] > cap:
                x[i] = cap
        e, g = energy_grad(x, n, d, lam, ell, cap)
        smem = np.zeros((m, ndof))
        ymem = np.zeros((m, ndof))
        rho = np.zeros(m)
        npairs = 0
        head = 0
        tlast = 1.0
        pgnorm = np.inf
        it = 0
        converged = False
        alphas = np.zeros(m)
        e_window = e
        for it in range(max_iters):
            # active box faces: drop their components from the quasi-Newton model
            dvec = g.copy()
            for i in range(nb + 1, ndof - 1):
                if (x[i] <= 0.0 and g[i] > 0.0) or (x[i] >= cap and g[i] < 0.0):
                    dvec[i] = 0.0
            gmask = dvec.copy()
            # two-loop recursion
            kuse = npairs
            for k in range(kuse):
                idx = (head - 1 - k) % m
                a = rho[idx] * np.dot(smem[idx], dvec)
                alphas[k] = a
                dvec -= a * ymem[idx]
            if npairs > 0:
                idx = (head - 1) % m
                yy = np.dot(ymem[idx], ymem[idx])
                gamma = np.dot(smem[idx], ymem[idx]) / yy if yy > _TINY else 1.0
                dvec *= gamma
            else:
                gn = np.sqrt(np.dot(gmask, gmask))
                dvec *= 1e-3 / gn if gn > 1e-12 else 1.0
            for k in range(kuse - 1, -1, -1):
                idx = (head - 1 - k) % m
                b = rho[idx] * np.dot(ymem[idx], dvec)
                dvec += (alphas[k] - b) * smem[idx]
            for i in range(nb + 1, ndof - 1):
                if (x[i] <= 0.0 and g[i] > 0.0) or (x[i] >= cap and g[i] < 0.0):
                    dvec[i] = 0.0
            if np.dot(dvec, g) <= 0.0:
                dvec = gmask.copy()   # quasi-Newton model unusable; steepest descent
            t = tlast * 2.0
            if t > 1.0:
                t = 1.0
            accepted = False
            while t > _T_MIN:
                xt = x - t * dvec
                for i in range(nb + 1, ndof - 1):
                    if xt[i] < 0.0:
                        xt[i] = 0.0
                    elif xt[i] > cap:
                        xt[i] = cap
                et = energy(xt, n, d, lam, ell, cap)
                if np.isfinite(et):
                    slope = np.dot(g, xt - x)
                    if et <= e + _C1 * slope and slope < 0.0:
                        et2, gt = energy_grad(xt, n, d, lam, ell, cap)
                        svec = xt - x
                        yvec = gt - g
                        sy = np.dot(svec, yvec)
                        snrm = np.sqrt(np.dot(svec, svec))
                        ynrm = np.sqrt(np.dot(yvec, yvec))
                        if sy > 1e-10 * snrm * ynrm:
                            smem[head] = svec
                            ymem[head] = yvec
                            rho[head] = 1.0 / sy
                            head = (head + 1) % m
                            if npairs < m:
                                npairs += 1
                        x = xt
                        e = et2
                        g = gt
                        tlast = t
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                # numerically stationary: no admissible decrease direction
                break
            # unit-step projected gradient residual
            pg2 = 0.0
            for i in range(ndof):
                xi = x[i] - g[i]
                if i >= nb + 1 and i < ndof - 1:
                    if xi < 0.0:
                        xi = 0.0
                    elif xi > cap:
                        xi = cap
                diff = x[i] - xi
                pg2 += diff * diff
            pgnorm = np.sqrt(pg2)
            if pgnorm <= grad_tol:
                converged = True
                break
            if (it + 1) % 200 == 0:
                if e_window - e <= stall_tol * (abs(e) + 1e-30):
                    break
                e_window = e
        if not converged and np.isfinite(pgnorm) and pgnorm <= grad_tol:
            converged = True
        return x, e, converged, it + 1, pgnorm

    return wrap(descend)


if USING_NUMBA:
    # rebind the inner helper first so the jitted callers resolve to it
    _node_dist2_loop = jit(_node_dist2_loop)
    _energy_impl = jit(_cell_energy_loop)
    _energy_grad_impl = jit(_cell_energy_grad_loop)
    _node_dist2 = _node_dist2_loop
    cell_energy = _energy_impl
    cell_energy_grad = _energy_grad_impl
    cell_descend = _make_descend(_energy_impl, _energy_grad_impl, jit)
else:
    _node_dist2 = _node_dist2_loop
    cell_energy = _cell_energy_np
    cell_energy_grad = _cell_energy_grad_np
    cell_descend = _make_descend(_cell_energy_np, _cell_energy_grad_np, lambda f: f)

# always-available references for the backend parity tests and the benchmark
cell_energy_numpy = _cell_energy_np
cell_energy_grad_numpy = _cell_energy_grad_np
cell_descend_numpy = _make_descend(_cell_energy_np, _cell_energy_grad_np, lambda f: f)
