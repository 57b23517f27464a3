"""Convolution and pooling written as tensor contractions.

Images are (C, H, W), kernels (OUT, IN, KH, KW), patch tensors
(H_out, W_out, C_in, KH, KW). Convolution is cross-correlation (no kernel
flip) with zero padding. The ``*_batch`` functions work on plain ndarrays
with a leading sample axis and back both the single-image API and the
trainer.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ChannelMismatch, NonIntegralGeometry, NonPositiveOutput, SizeMismatch
from .tensor import DenseTensor, as_tensor, contract_arrays

KERNEL_MODES = ("OUT", "IN", "KH", "KW")
IMAGE_MODES = ("C", "H", "W")
PATCH_MODES = ("H_out", "W_out", "C_in", "KH", "KW")


class Kernel(DenseTensor):
    """Rank-4 convolution kernel with modes (OUT, IN, KH, KW)."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, mode_labels=None)
        if self.rank != 4:
            raise SizeMismatch(f"kernel must be rank 4, got dims {self.dims}")
        self._labels = KERNEL_MODES

    @classmethod
    def from_xy_in_out(cls, data):
        """Ingest a kernel stored as (X, Y, C_in, C_out), with X the row (height) index."""
        return cls(np.transpose(np.asarray(data, dtype=np.float64), (3, 2, 0, 1)))


class Image(DenseTensor):
    """Rank-3 image with modes (C, H, W)."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, mode_labels=None)
        if self.rank != 3:
            raise SizeMismatch(f"image must be rank 3, got dims {self.dims}")
        self._labels = IMAGE_MODES


class PatchTensor(DenseTensor):
    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, mode_labels=None)
        if self.rank != 5:
            raise SizeMismatch(f"patch tensor must be rank 5, got dims {self.dims}")
        self._labels = PATCH_MODES


@dataclass(frozen=True)
class ConvGeometry:
    kernel_h: int
    kernel_w: int
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0

    def __post_init__(self):
        if min(self.kernel_h, self.kernel_w, self.stride_h, self.stride_w) < 1:
            raise NonPositiveOutput(f"kernel and stride sizes must be >= 1: {self}")
        if min(self.pad_h, self.pad_w) < 0:
            raise NonPositiveOutput(f"padding must be >= 0: {self}")

    @classmethod
    def square(cls, size, stride=1, pad=0):
        return cls(size, size, stride, stride, pad, pad)


def _out_len(n, k, s, p, axis):
    span = n - k + 2 * p
    if span < 0:
        raise NonPositiveOutput(f"{axis}: window {k} larger than padded input {n + 2 * p}")
    if span % s:
        raise NonIntegralGeometry(f"{axis}: ({n} - {k} + 2*{p}) is not divisible by stride {s}")
    return span // s + 1


def output_dims(g, h, w):
    if h < 1 or w < 1:
        raise NonPositiveOutput(f"input dims must be >= 1, got {h}x{w}")
    return (
        _out_len(h, g.kernel_h, g.stride_h, g.pad_h, "height"),
        _out_len(w, g.kernel_w, g.stride_w, g.pad_w, "width"),
    )


# --- batched ndarray primitives --------------------------------------------


def im2col_batch(x, g):
    """(N, C, H, W) -> (N, H_out, W_out, C, KH, KW), zeros where padding is read."""
    ho, wo = output_dims(g, x.shape[2], x.shape[3])
    return kernels.im2col(x, g.kernel_h, g.kernel_w, g.stride_h, g.stride_w, g.pad_h, g.pad_w, ho, wo)


def col2im_batch(cols, g, h, w):
    """Adjoint of :func:`im2col_batch`: scatter-add patches back onto the image."""
    return kernels.col2im(cols, h, w, g.stride_h, g.stride_w, g.pad_h, g.pad_w)


def conv2d_batch(x, k, g, bias=None, patches=None):
    if x.shape[1] != k.shape[1]:
        raise ChannelMismatch(f"image has {x.shape[1]} channels, kernel expects {k.shape[1]}")
    if (g.kernel_h, g.kernel_w) != k.shape[2:]:
        raise SizeMismatch(f"geometry {g.kernel_h}x{g.kernel_w} vs kernel {k.shape[2:]}")
    if patches is None:
        patches = im2col_batch(x, g)
    out = contract_arrays([patches, k], "nijcab,ocab->noij")
    if bias is not None:
        out = out + np.asarray(bias)[None, :, None, None]
    return out


def avg_pool_batch(x, window, stride):
    g = ConvGeometry.square(window, stride)
    patches = im2col_batch(x, g)
    alpha = 1.0 / (window * window)
    ones = np.ones(window)
    alphas = np.full(window, alpha)
    # fold ones x alphas into the constant window first, then one joint sum over (a, b)
    return contract_arrays([patches, ones, alphas], "nijcab,a,b->ncij", order=(1, 2, 0))


def max_pool_batch(x, window, stride):
    patches = im2col_batch(x, ConvGeometry.square(window, stride))
    return patches.max(axis=(4, 5)).transpose(0, 3, 1, 2).copy()


# --- single-image API -------------------------------------------------------


def im2col(img, g):
    img = Image(img) if not isinstance(img, Image) else img
    return PatchTensor(im2col_batch(img.array[None], g)[0])


def conv2d(img, k, g=None, bias=None):
    """Cross-correlate ``img`` with ``k``: one contraction of the patch tensor with the kernel."""
    img = img if isinstance(img, Image) else Image(img)
    k = k if isinstance(k, Kernel) else Kernel(k)
    if g is None:
        g = ConvGeometry(k.dims[2], k.dims[3])
    return Image(conv2d_batch(img.array[None], k.array, g, bias)[0])


def avg_pool(img, window, stride):
    img = img if isinstance(img, Image) else Image(img)
    return Image(avg_pool_batch(img.array[None], window, stride)[0])


def max_pool(img, window, stride):
    img = img if isinstance(img, Image) else Image(img)
    return Image(max_pool_batch(img.array[None], window, stride)[0])


def relu(t):
    t = as_tensor(t)
    return DenseTensor._wrap(np.maximum(t.array, 0.0), t.mode_labels)


def pooling_kernel(channels, window):
    """Constant channel-diagonal kernel whose convolution is average pooling."""
    k = np.zeros((channels, channels, window, window))
    alpha = 1.0 / (window * window)
    for c in range(channels):
        k[c, c] = np.outer(np.ones(window), np.full(window, alpha))
    return Kernel(k)
