"""Correlation truncation across kernel-mode bipartitions, plus the impact
metrics: norm loss, entanglement entropy, correlation loss, compression ratio.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

from .conv import KERNEL_MODES, Kernel
from .decomp import cp_als, cp_reconstruct
from .errors import BadRank, ZeroSpectrum
from .linalg import svd, truncated_reconstruct
from .tensor import frobenius_norm, inverse_permutation, permute, reshape

ZERO_NORM = 1e-12


@dataclass(frozen=True)
class Bipartition:
    """Kernel modes grouped on the left of a cut; the rest go right.

    Both sides keep canonical (OUT, IN, KH, KW) order.
    """

    left: tuple

    def __post_init__(self):
        left = tuple(self.left)
        if len(set(left)) != len(left) or not set(left) <= set(KERNEL_MODES):
            raise ValueError(f"bad bipartition modes {left}")
        if not 1 <= len(left) <= 3:
            raise ValueError(f"bipartition needs 1..3 modes on the left, got {left}")
        object.__setattr__(self, "left", tuple(m for m in KERNEL_MODES if m in left))

    @classmethod
    def parse(cls, text):
        return cls(tuple(p.strip().upper() for p in text.split(",") if p.strip()))

    @property
    def right(self):
        return tuple(m for m in KERNEL_MODES if m not in self.left)

    @property
    def order(self):
        return tuple(KERNEL_MODES.index(m) for m in self.left + self.right)

    def complement(self):
        return Bipartition(self.right)

    def shape(self, dims):
        rows = prod(dims[KERNEL_MODES.index(m)] for m in self.left)
        return rows, prod(dims) // rows

    @property
    def label(self):
        return ",".join(self.left)

    def __str__(self):
        return self.label


STUDIED_CUTS = tuple(
    Bipartition.parse(s) for s in ("OUT", "IN", "KW", "KH", "OUT,IN", "OUT,KW", "OUT,KH")
)


@dataclass(frozen=True)
class TruncationReport:
    target: str
    kept: int
    norm_before: float
    norm_after: float
    norm_loss_pct: float
    entropy_before: float
    entropy_after: float
    corr_loss_pct: float
    compression_ratio: float
    zero_kernel: bool = False


def _as_kernel(k):
    return k if isinstance(k, Kernel) else Kernel(k)


def matricize(k, b):
    k = _as_kernel(k)
    return reshape(permute(k, b.order), b.shape(k.dims))


def dematricize(m, b, dims):
    """Inverse of :func:`matricize` for a kernel of shape ``dims``."""
    permuted = tuple(dims[i] for i in b.order)
    return Kernel(permute(reshape(m, permuted), inverse_permutation(b.order)).array)


def spectrum(k, b):
    return svd(matricize(k, b)).s


def entanglement_entropy(s):
    """Entropy of p_k = s_k^2 / sum s^2 (natural log, 0 ln 0 = 0)."""
    s = np.abs(np.asarray(s, dtype=np.float64))
    top = s.max() if s.size else 0.0
    if top <= 0.0:
        raise ZeroSpectrum("entropy of an all-zero spectrum")
    s = s / top  # guards against under/overflow when squaring
    sq = s * s
    total = sq.sum()
    p = sq[sq > 0] / total
    return float(max(0.0, -np.sum(p * np.log(p))))


def _safe_entropy(s):
    try:
        return entanglement_entropy(s)
    except ZeroSpectrum:
        return 0.0


def settle_norm(before, after):
    """Snap an ``after`` norm that exceeds ``before`` only by rounding (lossless truncations)."""
    return before if before < after <= before * (1 + 1e-12) else after


def norm_loss_pct(before, after):
    if before <= 0.0:
        return 0.0
    return (before - after) / before * 100.0


def corr_loss_pct(e_before, e_after):
    if e_before <= 0.0:
        return 0.0
    return (e_before - e_after) / e_before * 100.0


def compression_ratio_svd(b, dims, keep):
    """Dense parameter count over factored count ``keep*(rows + cols + 1)``."""
    if keep < 1:
        raise BadRank(f"keep must be >= 1, got {keep}")
    rows, cols = b.shape(dims)
    return prod(dims) / (keep * (rows + cols + 1))


def compression_ratio_cp(dims, rank):
    return prod(dims) / (rank * sum(dims) + rank)


def truncate_bipartition(k, b, keep):
    """Keep the ``keep`` largest singular values across cut ``b``."""
    k = _as_kernel(k)
    f = svd(matricize(k, b))
    if not 1 <= keep <= f.n_sv:
        raise BadRank(f"keep={keep} outside 1..{f.n_sv} for cut {b}")
    cr = compression_ratio_svd(b, k.dims, keep)
    before = frobenius_norm(k)
    if before < ZERO_NORM:
        report = TruncationReport(b.label, keep, before, before, 0.0, 0.0, 0.0, 0.0, cr, True)
        return k, report
    kt = dematricize(truncated_reconstruct(f, keep), b, k.dims)
    after = settle_norm(before, frobenius_norm(kt))
    e0 = entanglement_entropy(f.s)
    e1 = _safe_entropy(f.s[:keep])
    report = TruncationReport(
        b.label, keep, before, after, norm_loss_pct(before, after),
        e0, e1, corr_loss_pct(e0, e1), cr,
    )
    return kt, report


def truncate_cp(k, rank, max_iters=500, tol=1e-8, seed=0):
    """Replace ``k`` by its rank-``rank`` CP fit; entropies are quoted on the OUT cut."""
    k = _as_kernel(k)
    cr = compression_ratio_cp(k.dims, rank)
    before = frobenius_norm(k)
    if before < ZERO_NORM:
        if rank < 1:
            raise BadRank(f"CP rank must be >= 1, got {rank}")
        return k, TruncationReport("CP", rank, before, before, 0.0, 0.0, 0.0, 0.0, cr, True)
    f = cp_als(k, rank, max_iters=max_iters, tol=tol, seed=seed)
    kt = cp_reconstruct(f)
    after = frobenius_norm(kt)
    out_cut = Bipartition(("OUT",))
    e0 = _safe_entropy(spectrum(k, out_cut))
    e1 = _safe_entropy(spectrum(kt, out_cut))
    report = TruncationReport(
        "CP", rank, before, after, norm_loss_pct(before, after),
        e0, e1, corr_loss_pct(e0, e1), cr,
    )
    return kt, report
