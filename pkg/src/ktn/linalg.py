"""Singular value decomposition by one-sided Jacobi rotations."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BadRank, NoConvergence, SizeMismatch
from .tensor import DenseTensor, as_tensor

MAX_SWEEPS = 60
CLAMP = 1e-14
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class SvdFactors:
    """``m == u @ diag(s) @ v`` with orthonormal columns of u and rows of v."""

    u: DenseTensor
    s: np.ndarray
    v: DenseTensor
    sweeps: int = 0

    @property
    def n_sv(self):
        return len(self.s)

    def residual_norm(self, keep):
        return float(np.sqrt(np.sum(self.s[keep:] ** 2)))


def _complete_rows(v, filled):
    """Replace rows of ``v`` not flagged in ``filled`` with an orthonormal completion."""
    n = v.shape[1]
    basis = [v[i] for i in range(len(v)) if filled[i]]
    for i in range(len(v)):
        if filled[i]:
            continue
        best, best_norm = None, -1.0
        for j in range(n):
            cand = np.zeros(n)
            cand[j] = 1.0
            for _ in range(2):
                for b in basis:
                    cand -= (b @ cand) * b
            nrm = np.sqrt(cand @ cand)
            if nrm > best_norm + 1e-8:
                best, best_norm = cand, nrm
            if best_norm > 0.7:
                break
        v[i] = best / best_norm
        basis.append(v[i])
    return v


def svd(m):
    """Thin SVD of a matrix; singular values descending, ``n_sv = min(rows, cols)``."""
    a = as_tensor(m).array
    if a.ndim != 2:
        raise SizeMismatch(f"svd needs a matrix, got rank {a.ndim}")
    rows, cols = a.shape
    transposed = rows > cols
    w = np.array(a.T if transposed else a, dtype=np.float64, order="C")
    r = w.shape[0]
    q = np.eye(r)
    normsq = float(np.sum(w * w))

    sweeps = 0
    if normsq > 0.0:
        rel_tol = max(r, 1) * _EPS
        abs_tol = normsq * _EPS * _EPS
        sweeps = kernels.jacobi_rows(w, q, rel_tol, abs_tol, MAX_SWEEPS)
        if sweeps < 0:
            raise NoConvergence(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")

    s = np.sqrt(np.sum(w * w, axis=1))
    order = np.argsort(-s, kind="stable")
    s, w, q = s[order], w[order], q[order]
    smax = s[0] if len(s) else 0.0
    s[s <= CLAMP * smax] = 0.0
    live = s > 0.0
    v = np.zeros_like(w)
    v[live] = w[live] / s[live, None]
    v = _complete_rows(v, live)
    u = q.T.copy()

    if transposed:
        u, v = v.T.copy(), u.T.copy()
    # largest-magnitude entry of each left vector made nonnegative (first on ties)
    for k in range(u.shape[1]):
        j = int(np.argmax(np.abs(u[:, k])))
        if u[j, k] < 0:
            u[:, k] *= -1.0
            v[k, :] *= -1.0
    s.flags.writeable = False
    return SvdFactors(DenseTensor._wrap(u), s, DenseTensor._wrap(v), sweeps)


def singular_values(m):
    return svd(m).s


def truncated_reconstruct(f, keep):
    """Rank-``keep`` reconstruction ``sum_{k<keep} s_k u_k v_k``."""
    if not 1 <= keep <= f.n_sv:
        raise BadRank(f"keep={keep} outside 1..{f.n_sv}")
    us = f.u.array[:, :keep] * f.s[None, :keep]
    return DenseTensor._wrap(kernels.matmul(us, f.v.array[:keep]))
