"""Hot kernels for the image fidelity term (d = 2).

For each well-conditioned cell x inside the margin window the term compares
the image with itself translated by the back-rotated lattice probes,

    sum_k alpha_k sum_G (w(x + beta(x)^{-1} G v_k) - w(x))^2 * h^2,

with the cell mask sigma_min(beta) >= 1/2 (equivalently det != 0 and
||beta^{-1}||_op <= 2).  Probes G v_k are precomputed as a flat stack.
The image w is sampled bilinearly; pixel (row r, col c) sits at the
physical point (c*h, r*h).
"""

import numpy as np

from .backend import USING_NUMBA, jit


# ---------------------------------------------------------------------------
# loop implementations

def _fidelity_loop(u, w, probes, alphas, h, r0, r1, c0, c1, want_grad):
    ny, nx = w.shape
    npr = probes.shape[0]
    val = 0.0
    grad = np.zeros((u.shape[0], u.shape[1], 2, 2))
    masked = 0
    total = 0
    cell = h * h
    for r in range(r0, r1):
        for c in range(c0, c1):
            total += 1
            b00 = u[r, c, 0, 0]
            b01 = u[r, c, 0, 1]
            b10 = u[r, c, 1, 0]
            b11 = u[r, c, 1, 1]
            fro2 = b00 * b00 + b01 * b01 + b10 * b10 + b11 * b11
            det = b00 * b11 - b01 * b10
            adet = det if det >= 0.0 else -det
            ssum = np.sqrt(fro2 + 2.0 * adet)
            d2 = fro2 - 2.0 * adet
            sdiff = np.sqrt(d2) if d2 > 0.0 else 0.0
            smin = 0.5 * (ssum - sdiff)
            if smin < 0.5:
                masked += 1
                continue
            # closed-form 2x2 inverse
            a00 = b11 / det
            a01 = -b01 / det
            a10 = -b10 / det
            a11 = b00 / det
            wx = w[r, c]
            for k in range(npr):
                px = probes[k, 0]
                py = probes[k, 1]
                dx = a00 * px + a01 * py
                dy = a10 * px + a11 * py
                gx = c + dx / h
                gy = r + dy / h
                j0 = int(np.floor(gx))
                i0 = int(np.floor(gy))
                fx = gx - j0
                fy = gy - i0
                # margin guarantees in-range; clamp defensively
                if j0 < 0:
                    j0 = 0
                    fx = 0.0
                if j0 > nx - 2:
                    j0 = nx - 2
                    fx = 1.0
                if i0 < 0:
                    i0 = 0
                    fy = 0.0
                if i0 > ny - 2:
                    i0 = ny - 2
                    fy = 1.0
                w00 = w[i0, j0]
                w01 = w[i0, j0 + 1]
                w10 = w[i0 + 1, j0]
                w11 = w[i0 + 1, j0 + 1]
                wy = (w00 * (1 - fx) + w01 * fx) * (1 - fy) + (w10 * (1 - fx) + w11 * fx) * fy
                dwv = wy - wx
                val += alphas[k] * dwv * dwv * cell
                if want_grad:
                    dwdx = ((w01 - w00) * (1 - fy) + (w11 - w10) * fy) / h
                    dwdy = ((w10 - w00) * (1 - fx) + (w11 - w01) * fx) / h
                    # dy/dB = -A[:, p] * (A probe)_q ; chain through 2 dw (wy - wx)
                    coef = 2.0 * alphas[k] * dwv * cell
                    atw0 = a00 * dwdx + a10 * dwdy
                    atw1 = a01 * dwdx + a11 * dwdy
                    grad[r, c, 0, 0] -= coef * atw0 * dx
                    grad[r, c, 0, 1] -= coef * atw0 * dy
                    grad[r, c, 1, 0] -= coef * atw1 * dx
                    grad[r, c, 1, 1] -= coef * atw1 * dy
    return val, grad, masked, total


# ---------------------------------------------------------------------------
# vectorized numpy implementation

def _fidelity_np(u, w, probes, alphas, h, r0, r1, c0, c1, want_grad):
    ny, nx = w.shape
    usub = u[r0:r1, c0:c1]
    b00 = usub[..., 0, 0]
    b01 = usub[..., 0, 1]
    b10 = usub[..., 1, 0]
    b11 = usub[..., 1, 1]
    fro2 = b00 ** 2 + b01 ** 2 + b10 ** 2 + b11 ** 2
    det = b00 * b11 - b01 * b10
    adet = np.abs(det)
    ssum = np.sqrt(fro2 + 2.0 * adet)
    sdiff = np.sqrt(np.maximum(fro2 - 2.0 * adet, 0.0))
    smin = 0.5 * (ssum - sdiff)
    mask = smin >= 0.5
    total = mask.size
    masked = int(total - mask.sum())
    safe_det = np.where(mask, det, 1.0)
    a00 = np.where(mask, b11 / safe_det, 0.0)
    a01 = np.where(mask, -b01 / safe_det, 0.0)
    a10 = np.where(mask, -b10 / safe_det, 0.0)
    a11 = np.where(mask, b00 / safe_det, 0.0)
    rows = np.arange(r0, r1)[:, None, None]
    cols = np.arange(c0, c1)[None, :, None]
    px = probes[None, None, :, 0]
    py = probes[None, None, :, 1]
    dx = a00[..., None] * px + a01[..., None] * py
    dy = a10[..., None] * px + a11[..., None] * py
    gx = cols + dx / h
    gy = rows + dy / h
    j0 = np.clip(np.floor(gx).astype(np.int64), 0, nx - 2)
    i0 = np.clip(np.floor(gy).astype(np.int64), 0, ny - 2)
    fx = np.clip(gx - j0, 0.0, 1.0)
    fy = np.clip(gy - i0, 0.0, 1.0)
    w00 = w[i0, j0]
    w01 = w[i0, j0 + 1]
    w10 = w[i0 + 1, j0]
    w11 = w[i0 + 1, j0 + 1]
    wy = (w00 * (1 - fx) + w01 * fx) * (1 - fy) + (w10 * (1 - fx) + w11 * fx) * fy
    wx = w[r0:r1, c0:c1][..., None]
    dwv = (wy - wx) * mask[..., None]
    cell = h * h
    val = float((alphas[None, None, :] * dwv ** 2).sum() * cell)
    grad = np.zeros_like(u)
    if want_grad:
        dwdx = ((w01 - w00) * (1 - fy) + (w11 - w10) * fy) / h
        dwdy = ((w10 - w00) * (1 - fx) + (w11 - w01) * fx) / h
        coef = 2.0 * alphas[None, None, :] * dwv * cell
        atw0 = a00[..., None] * dwdx + a10[..., None] * dwdy
        atw1 = a01[..., None] * dwdx + a11[..., None] * dwdy
        gsub = np.zeros_like(usub)
        gsub[..., 0, 0] = -(coef * atw0 * dx).sum(axis=-1)
        gsub[..., 0, 1] = -(coef * atw0 * dy).sum(axis=-1)
        gsub[..., 1, 0] = -(coef * atw1 * dx).sum(axis=-1)
        gsub[..., 1, 1] = -(coef * atw1 * dy).sum(axis=-1)
        grad[r0:r1, c0:c1] = gsub
    return val, grad, masked, total


if USING_NUMBA:
    fidelity_kernel = jit(_fidelity_loop)
else:
    fidelity_kernel = _fidelity_np

fidelity_kernel_numpy = _fidelity_np
