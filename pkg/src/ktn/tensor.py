"""Dense N-mode tensors and a pairwise contraction engine.

Tensors are immutable, row-major (last mode fastest) float64 arrays with
optional mode labels. Contractions are written as einsum-style subscripts
(``"ij,jk->ik"``) and executed as a sequence of pairwise steps, each one a
permute -> reshape -> batched matrix multiply through :mod:`ktn.kernels`.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

from . import kernels
from .errors import BadPermutation, SizeMismatch, SpecMismatch


class DenseTensor:
    """Immutable float64 tensor with optional per-mode labels."""

    __slots__ = ("_array", "_labels")

    def __init__(self, data, dims=None, mode_labels=None):
        if isinstance(data, DenseTensor):
            data = data._array
        arr = np.array(data, dtype=np.float64, order="C")
        if dims is not None:
            dims = tuple(int(d) for d in dims)
            if arr.size != prod(dims):
                raise SizeMismatch(f"{arr.size} values do not fill dims {dims}")
            arr = arr.reshape(dims)
        if any(d < 1 for d in arr.shape):
            raise SizeMismatch(f"every dim must be >= 1, got {arr.shape}")
        arr.flags.writeable = False
        if mode_labels is not None:
            mode_labels = tuple(str(m) for m in mode_labels)
            if len(mode_labels) != arr.ndim:
                raise SizeMismatch(f"{len(mode_labels)} labels for rank-{arr.ndim} tensor")
            if len(set(mode_labels)) != len(mode_labels):
                raise ValueError(f"duplicate mode labels {mode_labels}")
        self._array = arr
        self._labels = mode_labels

    @classmethod
    def _wrap(cls, arr, mode_labels=None):
        # trusted fast path for freshly computed arrays
        t = DenseTensor.__new__(DenseTensor)
        arr = np.asarray(arr, dtype=np.float64, order="C")
        if arr.flags.writeable and not arr.flags.owndata:
            arr = arr.copy()
        arr.flags.writeable = False
        t._array = arr
        t._labels = mode_labels
        return t

    @property
    def dims(self):
        return self._array.shape

    @property
    def rank(self):
        return self._array.ndim

    @property
    def size(self):
        return self._array.size

    @property
    def data(self):
        """Flat row-major view of the entries (read-only)."""
        return self._array.reshape(-1)

    @property
    def array(self):
        return self._array

    @property
    def mode_labels(self):
        return self._labels

    def with_labels(self, mode_labels):
        return DenseTensor(self._array, mode_labels=mode_labels)

    def __array__(self, dtype=None, copy=None):
        if dtype is not None and np.dtype(dtype) != self._array.dtype:
            return self._array.astype(dtype)
        return self._array

    def __getitem__(self, idx):
        return self._array[idx]

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return (
            self.dims == other.dims
            and self._labels == other._labels
            and self._array.tobytes() == other._array.tobytes()
        )

    __hash__ = None

    def __repr__(self):
        labels = f", mode_labels={list(self._labels)}" if self._labels else ""
        return f"DenseTensor(dims={list(self.dims)}{labels})"


def as_tensor(x):
    return x if isinstance(x, DenseTensor) else DenseTensor(x)


def reshape(t, new_dims):
    """Reinterpret the flat data with new dims; labels are dropped."""
    t = as_tensor(t)
    new_dims = tuple(int(d) for d in new_dims)
    if prod(new_dims) != t.size:
        raise SizeMismatch(f"cannot reshape {t.dims} to {new_dims}")
    if any(d < 1 for d in new_dims):
        raise SizeMismatch(f"every dim must be >= 1, got {new_dims}")
    return DenseTensor._wrap(t.array.reshape(new_dims))


def _check_perm(order, rank):
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(rank)):
        raise BadPermutation(f"{order} is not a permutation of 0..{rank - 1}")
    return order


def inverse_permutation(order):
    inv = [0] * len(order)
    for i, o in enumerate(order):
        inv[o] = i
    return tuple(inv)


def permute(t, order):
    """Reorder modes: ``result.dims[i] == t.dims[order[i]]``."""
    t = as_tensor(t)
    order = _check_perm(order, t.rank)
    labels = tuple(t.mode_labels[o] for o in order) if t.mode_labels else None
    return DenseTensor._wrap(t.array.transpose(order), labels)


def hadamard(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.dims != b.dims:
        raise SizeMismatch(f"hadamard of {a.dims} and {b.dims}")
    return DenseTensor._wrap(a.array * b.array, a.mode_labels)


def frobenius_norm(t):
    flat = np.asarray(t, dtype=np.float64).reshape(-1)
    return float(np.sqrt(flat @ flat))


def copy_tensor(n_legs, dim):
    """Delta tensor: 1 where all indices agree, else 0."""
    out = np.zeros((dim,) * n_legs)
    idx = np.arange(dim)
    out[(idx,) * n_legs] = 1.0
    return DenseTensor._wrap(out)


def constant_vector(dim, alpha=1.0):
    return DenseTensor._wrap(np.full(dim, float(alpha)))


def identity(dim):
    return copy_tensor(2, dim)


# --- contraction -----------------------------------------------------------


@dataclass(frozen=True)
class ContractionSpec:
    """Index symbols for each input and for the output (one char per mode)."""

    inputs: tuple
    output: str

    @classmethod
    def parse(cls, text):
        text = text.replace(" ", "")
        if "->" in text:
            lhs, out = text.split("->")
        else:
            lhs = text
            symbols = lhs.replace(",", "")
            out = "".join(sorted(s for s in set(symbols) if symbols.count(s) == 1))
        terms = tuple(lhs.split(","))
        spec = cls(terms, out)
        spec._check_symbols()
        return spec

    def _check_symbols(self):
        seen = set("".join(self.inputs))
        for s in self.output:
            if s not in seen:
                raise SpecMismatch(f"output symbol {s!r} missing from inputs")
        if len(set(self.output)) != len(self.output):
            raise SpecMismatch(f"repeated output symbol in {self.output!r}")

    def symbol_sizes(self, dims_list):
        """Validate against input dims and return {symbol: size}."""
        if len(dims_list) != len(self.inputs):
            raise SpecMismatch(f"{len(self.inputs)} terms for {len(dims_list)} tensors")
        sizes = {}
        for term, dims in zip(self.inputs, dims_list):
            if len(term) != len(dims):
                raise SpecMismatch(f"term {term!r} has {len(term)} symbols for rank {len(dims)}")
            for s, d in zip(term, dims):
                if sizes.setdefault(s, d) != d:
                    raise SpecMismatch(f"symbol {s!r} has sizes {sizes[s]} and {d}")
        return sizes

    def __str__(self):
        return ",".join(self.inputs) + "->" + self.output


def _as_spec(spec):
    if isinstance(spec, ContractionSpec):
        spec._check_symbols()
        return spec
    return ContractionSpec.parse(spec)


def _sum_modes(arr, term, drop):
    """Sum out modes in ``drop`` by contracting them with an all-ones vector."""
    keep = [s for s in term if s not in drop]
    gone = [s for s in term if s in drop]
    if not gone:
        return arr, term
    perm = [term.index(s) for s in keep + gone]
    kdims = [arr.shape[term.index(s)] for s in keep]
    gsize = prod(arr.shape[term.index(s)] for s in gone)
    mat = arr.transpose(perm).reshape(1, prod(kdims), gsize)
    ones = np.ones((1, gsize, 1))
    out = kernels.bmm(mat, ones).reshape(kdims)
    return out, "".join(keep)


def _diagonalize(arr, term):
    """Collapse repeated symbols within one term (trace-like wiring)."""
    while len(set(term)) != len(term):
        for s in term:
            if term.count(s) > 1:
                break
        i = term.index(s)
        j = term.index(s, i + 1)
        arr = np.diagonal(arr, axis1=i, axis2=j)  # diagonal mode moves to the end
        term = "".join(c for k, c in enumerate(term) if k not in (i, j)) + s
    return np.ascontiguousarray(arr), term


def _pair(a, ta, b, tb, needed):
    batch = [s for s in ta if s in tb and s in needed]
    summed = [s for s in ta if s in tb and s not in needed]
    left = [s for s in ta if s not in tb]
    right = [s for s in tb if s not in ta]
    size = {**dict(zip(ta, a.shape)), **dict(zip(tb, b.shape))}
    nb = prod(size[s] for s in batch)
    m = prod(size[s] for s in left)
    k = prod(size[s] for s in summed)
    n = prod(size[s] for s in right)
    am = a.transpose([ta.index(s) for s in batch + left + summed]).reshape(nb, m, k)
    bm = b.transpose([tb.index(s) for s in batch + summed + right]).reshape(nb, k, n)
    out = kernels.bmm(am, bm).reshape([size[s] for s in batch + left + right])
    return out, "".join(batch + left + right)


def contract(inputs, spec, order=None):
    """Contract a tensor network given as einsum-style subscripts.

    ``order`` lists input positions in the sequence they are folded into the
    running result (default left to right). Every step costs the product of
    the sizes of the distinct symbols of the two operands.
    """
    arrays = [as_tensor(t).array for t in inputs]
    return DenseTensor._wrap(contract_arrays(arrays, spec, order))


def contract_arrays(arrays, spec, order=None):
    """:func:`contract` on plain float64 ndarrays, returning an ndarray."""
    spec = _as_spec(spec)
    spec.symbol_sizes([a.shape for a in arrays])
    if order is None:
        order = range(len(arrays))
    order = _check_perm(order, len(arrays))

    ops = [_diagonalize(np.asarray(a, dtype=np.float64), term) for a, term in zip(arrays, spec.inputs)]
    # a symbol private to one operand and absent from the output is summed up front
    counts = {}
    for _, term in ops:
        for s in set(term):
            counts[s] = counts.get(s, 0) + 1
    ops = [
        _sum_modes(arr, term, {s for s in term if counts[s] == 1 and s not in spec.output})
        for arr, term in ops
    ]

    cur, cterm = ops[order[0]]
    for step, idx in enumerate(order[1:], start=1):
        nxt, nterm = ops[idx]
        needed = set(spec.output)
        for later in order[step + 1:]:
            needed |= set(ops[later][1])
        cur, cterm = _pair(cur, cterm, nxt, nterm, needed)
    cur, cterm = _sum_modes(cur, cterm, set(cterm) - set(spec.output))
    return cur.transpose([cterm.index(s) for s in spec.output])
