"""Tensor-network toolkit for convolution kernels."""
