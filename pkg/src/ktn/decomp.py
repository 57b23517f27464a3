"""Tucker/HOSVD, CP (alternating least squares) and tensor-train decompositions
of 4-mode kernels."""

from dataclasses import dataclass, field
from math import prod

import numpy as np

from . import kernels
from .conv import Kernel
from .errors import BadRank, SingularUpdate, SizeMismatch
from .linalg import svd
from .tensor import DenseTensor, as_tensor, contract, inverse_permutation, permute, reshape


def unfold(t, mode):
    """Mode-``mode`` matricization: that mode indexes rows, the rest (in order) columns."""
    t = as_tensor(t)
    order = (mode,) + tuple(i for i in range(t.rank) if i != mode)
    p = permute(t, order)
    return reshape(p, (t.dims[mode], t.size // t.dims[mode]))


def _as_kernel(k):
    return k if isinstance(k, Kernel) else Kernel(k)


# --- Tucker / HOSVD ---------------------------------------------------------


@dataclass(frozen=True)
class TuckerFactors:
    """Core plus one orthonormal-column mode matrix per kernel mode.

    ``singvals[i]`` is the full singular spectrum of the mode-i unfolding; it
    is already absorbed into ``core`` and kept only as metadata.
    """

    core: DenseTensor
    modes: tuple
    singvals: tuple
    ranks: tuple


def feasible_ranks(dims):
    total = prod(dims)
    return tuple(min(d, total // d) for d in dims)


def hosvd(k, ranks="full"):
    k = _as_kernel(k)
    limits = feasible_ranks(k.dims)
    if isinstance(ranks, str):
        if ranks != "full":
            raise BadRank(f"ranks must be four ints or 'full', got {ranks!r}")
        ranks = limits
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 4 or any(not 1 <= r <= lim for r, lim in zip(ranks, limits)):
        raise BadRank(f"ranks {ranks} outside feasible 1..{limits}")
    modes, singvals = [], []
    for i in range(4):
        f = svd(unfold(k, i))
        modes.append(DenseTensor._wrap(f.u.array[:, : ranks[i]]))
        singvals.append(f.s)
    core = contract([k] + modes, "oikl,oa,ib,kc,ld->abcd")
    return TuckerFactors(core, tuple(modes), tuple(singvals), ranks)


def tucker_reconstruct(f):
    shapes = [m.dims for m in f.modes]
    if any(len(s) != 2 for s in shapes) or tuple(s[1] for s in shapes) != f.core.dims:
        raise SizeMismatch(f"core {f.core.dims} does not match mode matrices {shapes}")
    return Kernel(contract([f.core, *f.modes], "abcd,oa,ib,kc,ld->oikl").array)


# --- CP ---------------------------------------------------------------------

RIDGE = 1e-12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class CpFactors:
    """Weighted sum of ``rank`` outer products; factor columns have unit norm."""

    rank: int
    factors: tuple
    weights: np.ndarray
    fit_error: float = 0.0
    converged: bool = True
    iterations: int = 0
    error_trace: tuple = field(default=(), repr=False)


def _khatri_rao(mats):
    r = mats[0].shape[1]
    out = np.ones((1, r))
    for m in mats:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, r)
    return out


def _spd_inverse(gram):
    """Inverse of a small symmetric PSD normal matrix, ridge-repaired when ill-conditioned."""
    f = svd(gram)
    s = f.s
    if s[0] == 0.0 or s[-1] <= s[0] / COND_LIMIT:
        gram = gram + RIDGE * np.trace(gram) * np.eye(len(gram))
        f = svd(gram)
        s = f.s
        if s[-1] == 0.0:
            raise SingularUpdate("normal matrix is singular even after ridge repair")
    # v^T diag(1/s) u^T
    return kernels.matmul(f.v.array.T / s[None, :], f.u.array.T)


def _cp_full(weights, factors):
    return contract([weights, *factors], "r,or,ir,kr,lr->oikl").array


def _rel_error(x, normx, weights, factors):
    if normx == 0.0:
        return 0.0
    diff = x - _cp_full(weights, factors)
    return float(np.sqrt(np.sum(diff * diff)) / normx)


def cp_als(k, rank, max_iters=500, tol=1e-8, seed=0):
    """Fit a rank-``rank`` CP model by alternating least squares.

    Each factor update solves its normal equations exactly, so the relative
    fit error never increases from one sweep to the next; columns are
    renormalized into ``weights`` after every update. Stops once the fit
    changes by less than ``tol`` or after ``max_iters`` sweeps.
    """
    k = _as_kernel(k)
    if rank < 1:
        raise BadRank(f"CP rank must be >= 1, got {rank}")
    x = k.array
    dims = k.dims
    normx = float(np.sqrt(np.sum(x * x)))
    unfolded = [unfold(k, n).array for n in range(4)]

    if all(rank <= d for d in dims):
        factors = [svd(u).u.array[:, :rank].copy() for u in unfolded]
    else:
        rng = np.random.default_rng(seed)
        factors = [rng.uniform(-1.0, 1.0, size=(d, rank)) for d in dims]
    weights = np.ones(rank)

    trace = []
    converged = False
    it = 0
    if normx == 0.0:
        weights = np.zeros(rank)
        converged = True
    else:
        err_prev = _rel_error(x, normx, weights, factors)
        for it in range(1, max_iters + 1):
            for n in range(4):
                others = [factors[m] for m in range(4) if m != n]
                gram = np.ones((rank, rank))
                for m in others:
                    gram *= kernels.matmul(m.T.copy(), m)
                mttkrp = kernels.matmul(unfolded[n], _khatri_rao(others))
                a = kernels.matmul(mttkrp, _spd_inverse(gram))
                lam = np.sqrt(np.sum(a * a, axis=0))
                live = lam > 0
                a[:, live] /= lam[live]
                a[:, ~live] = 0.0
                a[0, ~live] = 1.0
                factors[n] = a
                weights = lam
            err = _rel_error(x, normx, weights, factors)
            trace.append(err)
            if abs(err_prev - err) < tol:
                converged = True
                break
            err_prev = err

    order = np.argsort(-weights, kind="stable")
    weights = weights[order].copy()
    factors = tuple(DenseTensor._wrap(f[:, order]) for f in factors)
    fit = _rel_error(x, normx, weights, [f.array for f in factors])
    weights.flags.writeable = False
    return CpFactors(rank, factors, weights, fit, converged, it, tuple(trace))


def cp_reconstruct(f):
    shapes = [a.dims for a in f.factors]
    if len(shapes) != 4 or any(len(s) != 2 or s[1] != f.rank for s in shapes) or len(f.weights) != f.rank:
        raise SizeMismatch(f"inconsistent CP factors {shapes} for rank {f.rank}")
    return Kernel(_cp_full(np.asarray(f.weights, dtype=np.float64), [a.array for a in f.factors]))


# --- tensor train -----------------------------------------------------------


@dataclass(frozen=True)
class TtFactors:
    """Four rank-3 cores (bond, mode, bond) in ``mode_order``; boundary bonds are 1.

    ``spectra[j]`` holds the singular values computed at bond j before truncation.
    """

    cores: tuple
    bond_dims: tuple
    spectra: tuple
    mode_order: tuple = (0, 1, 2, 3)


def tt_svd(k, max_bond="full", mode_order=(0, 1, 2, 3)):
    """Sequential-SVD tensor train.

    With ``max_bond="full"`` every bond keeps all nonzero singular values, so
    the train is exact; otherwise bond j keeps at most ``max_bond[j]``.
    """
    k = _as_kernel(k)
    mode_order = tuple(mode_order)
    x = permute(k, mode_order).array
    dims = x.shape
    if not isinstance(max_bond, str):
        max_bond = tuple(int(b) for b in max_bond)
        if len(max_bond) != 3 or min(max_bond) < 1:
            raise BadRank(f"max_bond must be three ints >= 1, got {max_bond}")
    elif max_bond != "full":
        raise BadRank(f"max_bond must be three ints or 'full', got {max_bond!r}")

    cores, bonds, spectra = [], [], []
    left = 1
    rest = x.reshape(1, -1)
    for j in range(3):
        mat = rest.reshape(left * dims[j], -1)
        f = svd(mat)
        spectra.append(f.s)
        if max_bond == "full":
            keep = max(1, int(np.count_nonzero(f.s)))
        else:
            keep = min(max_bond[j], f.n_sv)
        cores.append(DenseTensor._wrap(f.u.array[:, :keep].reshape(left, dims[j], keep)))
        rest = f.s[:keep, None] * f.v.array[:keep]
        bonds.append(keep)
        left = keep
    cores.append(DenseTensor._wrap(rest.reshape(left, dims[3], 1)))
    return TtFactors(tuple(cores), tuple(bonds), tuple(spectra), mode_order)


def tt_reconstruct(f):
    full = contract(list(f.cores), "aib,bjc,ckd,dle->ijkl")
    return Kernel(permute(full, inverse_permutation(f.mode_order)).array)


def tucker_conv2d_batch(x, f, g):
    """Convolve with a Tucker-format kernel without rebuilding it.

    The patch tensor absorbs U_in, U_KH, U_KW (in that order), then the core,
    then U_out: five pairwise contractions.
    """
    from .conv import im2col_batch

    u_out, u_in, u_kh, u_kw = (m.array for m in f.modes)
    patches = im2col_batch(x, g)
    return contract(
        [patches, u_in, u_kh, u_kw, f.core.array, u_out],
        "nijcab,cg,ah,bq,dghq,od->noij",
    ).array
