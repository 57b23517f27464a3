"""Pure-numpy fallback for the compiled kernels in ``_ckernels``.

``bmm``, ``im2col`` and ``col2im`` reproduce the compiled results bit for bit;
``jacobi_rows`` agrees to rounding only (its inner products sum differently).
"""

import numpy as np


def bmm(a, b):
    nb, m, kk = a.shape
    if b.shape[0] != nb or b.shape[1] != kk:
        raise ValueError("bmm: shape mismatch")
    out = np.zeros((nb, m, b.shape[2]), dtype=np.float64)
    # k outermost: every out[p, i, j] accumulates over k in increasing order
    for k in range(kk):
        out += a[:, :, k, None] * b[:, None, k, :]
    return out


def jacobi_rows(w, q, rel_tol, abs_tol, max_sweeps):
    m = w.shape[0]
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(m - 1):
            for r in range(p + 1, m):
                x, y = w[p], w[r]
                alpha = float(x @ x)
                beta = float(y @ y)
                gamma = float(x @ y)
                if abs(gamma) <= abs_tol or abs(gamma) <= rel_tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                w[p], w[r] = c * x - s * y, s * x + c * y
                qp, qr = q[p].copy(), q[r].copy()
                q[p], q[r] = c * qp - s * qr, s * qp + c * qr
        if not rotated:
            return sweep + 1
    return -1


def im2col(x, kh, kw, sh, sw, ph, pw, ho, wo):
    nb, nc, h, wd = x.shape
    padded = np.zeros((nb, nc, h + 2 * ph, wd + 2 * pw), dtype=np.float64)
    padded[:, :, ph:ph + h, pw:pw + wd] = x
    out = np.zeros((nb, ho, wo, nc, kh, kw), dtype=np.float64)
    for a in range(kh):
        for b in range(kw):
            win = padded[:, :, a:a + sh * (ho - 1) + 1:sh, b:b + sw * (wo - 1) + 1:sw]
            out[:, :, :, :, a, b] = win.transpose(0, 2, 3, 1)
    return out


def col2im(cols, h, wd, sh, sw, ph, pw):
    nb, ho, wo, nc, kh, kw = cols.shape
    padded = np.zeros((nb, nc, h + 2 * ph, wd + 2 * pw), dtype=np.float64)
    for a in range(kh):
        for b in range(kw):
            padded[:, :, a:a + sh * (ho - 1) + 1:sh, b:b + sw * (wo - 1) + 1:sw] += (
                cols[:, :, :, :, a, b].transpose(0, 3, 1, 2)
            )
    return np.ascontiguousarray(padded[:, :, ph:ph + h, pw:pw + wd])
