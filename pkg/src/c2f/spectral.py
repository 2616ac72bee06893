"""Separable circulant Gaussian blur, its eigenbasis and fractional powers.

The 1D blur is a symmetric circulant matrix ``W = U diag(d) U^T``.  Fields are
either vectors of length ``n`` (``ndim=1``) or ``n x n`` images (``ndim=2``);
in 2D the operator acts separably along rows and columns, so the 2D eigenbasis
is ``U (x) U`` and the 2D eigenvalues are ``outer(d, d)``.  All leading axes
of an array are treated as batch axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import circulant

from .errors import InvalidParameter, InvalidState

DEFAULT_SIGMA = 0.4

# eigh vs. analytic cosine eigenvalues
_EIG_CROSSCHECK_TOL = 1e-10
_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GaussianKernel1D:
    sigma: float
    support: int
    weights: np.ndarray

    @property
    def center(self) -> int:
        return self.support // 2

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.support) - self.center


def default_support(sigma: float, axis_len: int) -> int:
    """Odd kernel length covering +-4 sigma, capped by the axis length."""
    support = min(2 * math.ceil(4 * sigma) + 1, axis_len)
    if support % 2 == 0:
        support -= 1
    return max(support, 3)


def build_kernel(sigma: float, support: int) -> GaussianKernel1D:
    """Sampled, normalized 1D Gaussian ``w_j ~ exp(-j^2 / (2 sigma^2))``.

    Parameters
    ----------
    sigma : float
        Standard deviation in pixels, must be positive.
    support : int
        Odd kernel length, at least 3.
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidParameter(f"sigma must be positive, got {sigma!r}")
    if int(support) != support or support < 3 or support % 2 == 0:
        raise InvalidParameter(f"support must be an odd integer >= 3, got {support!r}")
    support = int(support)
    offsets = np.arange(support) - support // 2
    weights = np.exp(-(offsets.astype(float) ** 2) / (2.0 * sigma**2))
    weights = weights / weights.sum()
    weights.setflags(write=False)
    return GaussianKernel1D(sigma=float(sigma), support=support, weights=weights)


def analytic_eigenvalues(kernel: GaussianKernel1D, axis_len: int) -> np.ndarray:
    """Eigenvalues of the periodized kernel indexed by DFT frequency ``k``."""
    n = axis_len
    k = np.arange(n)
    # fold k and n-k onto the same argument so conjugate pairs tie exactly
    k = np.minimum(k, n - k)
    phase = 2.0 * np.pi * np.outer(kernel.offsets, k) / n
    lam = kernel.weights @ np.cos(phase)
    lam[0] = 1.0  # normalized kernel: DC gain is exactly one
    return lam


@dataclass(frozen=True, eq=False)
class BlurOperator:
    """Immutable separable blur ``W`` with orthonormal eigenbasis.

    ``eigvecs_1d[:, m]`` pairs with ``eigvals_1d[m]``; eigenvalues are sorted
    descending and ``freq_index[m]`` is the DFT frequency they came from.
    """

    kernel: GaussianKernel1D
    axis_len: int
    eigvecs_1d: np.ndarray
    eigvals_1d: np.ndarray
    freq_index: np.ndarray
    ndim: int = 2

    @property
    def field_shape(self) -> tuple:
        return (self.axis_len,) * self.ndim

    @property
    def size(self) -> int:
        return self.axis_len**self.ndim

    @property
    def field_axes(self) -> tuple:
        return tuple(range(-self.ndim, 0))

    @property
    def eigvals(self) -> np.ndarray:
        """Field-shaped eigenvalues of the (possibly 2D) blur."""
        if self.ndim == 1:
            return self.eigvals_1d
        return np.multiply.outer(self.eigvals_1d, self.eigvals_1d)

    @property
    def matrix_1d(self) -> np.ndarray:
        """Dense 1D circulant blur matrix (first column = wrapped kernel)."""
        return circulant_matrix(self.kernel, self.axis_len)

    def check_shape(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[x.ndim - self.ndim:] != self.field_shape or x.ndim < self.ndim:
            raise InvalidParameter(
                f"field shape mismatch: expected trailing {self.field_shape}, got {x.shape}"
            )
        return x

    def to_spectral(self, x: np.ndarray) -> np.ndarray:
        x = self.check_shape(x)
        u = self.eigvecs_1d
        if self.ndim == 1:
            return x @ u
        return u.T @ x @ u

    def to_pixel(self, xbar: np.ndarray) -> np.ndarray:
        xbar = self.check_shape(xbar)
        u = self.eigvecs_1d
        if self.ndim == 1:
            return xbar @ u.T
        return u @ xbar @ u.T

    def apply_diagonal(self, x: np.ndarray, diag) -> np.ndarray:
        """``U diag(diag) U^T x`` for a field-shaped (or broadcastable) diagonal."""
        return self.to_pixel(np.asarray(diag) * self.to_spectral(x))

    def power(self, x: np.ndarray, p: float) -> np.ndarray:
        if p < 0:
            raise InvalidParameter(f"power must be >= 0, got {p!r}")
        x = self.check_shape(x)
        if p == 0:
            return x.copy()
        return self.apply_diagonal(x, self.eigvals**p)


def circulant_matrix(kernel: GaussianKernel1D, axis_len: int) -> np.ndarray:
    col = np.zeros(axis_len)
    col[kernel.offsets % axis_len] += kernel.weights
    return circulant(col)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # first clearly nonzero entry of each column positive, for reproducible bases
    idx = np.argmax(np.abs(vecs) > 1e-8, axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return vecs * signs


def build_blur_operator(kernel: GaussianKernel1D, axis_len: int, ndim: int = 2) -> BlurOperator:
    """Eigendecompose the periodic blur with ``kernel`` on an axis of ``axis_len``.

    The eigenvectors come from a dense symmetric eigensolver; the eigenvalues
    are cross-checked against the closed-form cosine sums of the kernel.
    """
    if ndim not in (1, 2):
        raise InvalidParameter(f"ndim must be 1 or 2, got {ndim!r}")
    if axis_len < kernel.support:
        raise InvalidParameter(
            f"kernel support {kernel.support} exceeds axis length {axis_len}"
        )
    w = circulant_matrix(kernel, axis_len)
    vals, vecs = np.linalg.eigh(w)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]

    lam = analytic_eigenvalues(kernel, axis_len)
    freq_index = np.argsort(-lam, kind="stable")
    lam = lam[freq_index]
    dev = np.max(np.abs(vals - lam))
    if dev > _EIG_CROSSCHECK_TOL:
        raise InvalidState(f"eigensolver disagrees with analytic spectrum by {dev:.3e}")
    if lam.min() <= 0:
        raise InvalidParameter(
            f"periodized kernel has non-positive spectrum (min {lam.min():.3e}); "
            "reduce the support or sigma"
        )

    vecs = _fix_signs(vecs)
    for arr in (vecs, lam, freq_index):
        arr.setflags(write=False)
    return BlurOperator(
        kernel=kernel,
        axis_len=int(axis_len),
        eigvecs_1d=vecs,
        eigvals_1d=lam,
        freq_index=freq_index,
        ndim=ndim,
    )


def make_operator(axis_len: int, sigma: float = DEFAULT_SIGMA, support: int | None = None,
                  ndim: int = 2) -> BlurOperator:
    if support is None or support == 0:
        support = default_support(sigma, axis_len)
    return build_blur_operator(build_kernel(sigma, support), axis_len, ndim=ndim)


def apply_power(op: BlurOperator, x, p: float) -> np.ndarray:
    """``W^p x``; ``p = 0`` returns a copy of ``x``."""
    return op.power(x, p)


def to_spectral(op: BlurOperator, x) -> np.ndarray:
    return op.to_spectral(x)


def to_pixel(op: BlurOperator, xbar) -> np.ndarray:
    return op.to_pixel(xbar)


def frequency_bands(op: BlurOperator, n_bands: int) -> np.ndarray:
    """Field-shaped band labels; band 0 holds the largest eigenvalues.

    Frequencies are split into ``n_bands`` groups of roughly equal count by
    eigenvalue rank.  Tied eigenvalues always share a band, so energies per
    band do not depend on the basis chosen inside a degenerate eigenspace.
    """
    if int(n_bands) != n_bands or n_bands < 2:
        raise InvalidParameter(f"n_bands must be an integer >= 2, got {n_bands!r}")
    vals = op.eigvals.ravel()
    order = np.argsort(-vals, kind="stable")
    sorted_vals = vals[order]
    total = vals.size
    labels = np.empty(total, dtype=int)
    start = 0
    while start < total:
        stop = start + 1
        while stop < total and sorted_vals[start] - sorted_vals[stop] <= _TIE_TOL:
            stop += 1
        labels[order[start:stop]] = min(start * n_bands // total, n_bands - 1)
        start = stop
    empty = sorted(set(range(n_bands)) - set(labels.tolist()))
    if empty:
        raise InvalidParameter(f"{n_bands} bands leave band(s) {empty} empty on this field")
    return labels.reshape(op.field_shape)


class SpectralField:
    """A field with lazily synchronized pixel and rotated representations.

    Exactly one representation is authoritative at construction; the other is
    computed on first access and cached.
    """

    def __init__(self, op: BlurOperator, pixel=None, spectral=None):
        if (pixel is None) == (spectral is None):
            raise InvalidParameter("give exactly one of pixel or spectral")
        self.op = op
        self._pixel = None if pixel is None else op.check_shape(pixel)
        self._spectral = None if spectral is None else op.check_shape(spectral)

    @classmethod
    def from_pixel(cls, op, x):
        return cls(op, pixel=x)

    @classmethod
    def from_spectral(cls, op, xbar):
        return cls(op, spectral=xbar)

    @property
    def shape(self):
        return (self._pixel if self._pixel is not None else self._spectral).shape

    @property
    def pixel(self) -> np.ndarray:
        if self._pixel is None:
            self._pixel = self.op.to_pixel(self._spectral)
        return self._pixel

    @property
    def spectral(self) -> np.ndarray:
        if self._spectral is None:
            self._spectral = self.op.to_spectral(self._pixel)
        return self._spectral

    def power(self, p: float) -> "SpectralField":
        if p == 0:
            return SpectralField.from_spectral(self.op, self.spectral.copy())
        return SpectralField.from_spectral(self.op, self.op.eigvals**p * self.spectral)

    def __repr__(self):
        which = "pixel" if self._pixel is not None else "spectral"
        return f"SpectralField(shape={self.shape}, authoritative={which})"
