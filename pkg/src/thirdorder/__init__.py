"""Spectral laboratory for a third-order-in-time evolution equation with
fractional Laplacian: exact Fourier kernels, decay and sharpness checks,
semilinear blow-up runs and blow-up test-function functionals."""

__version__ = "0.1.0"
