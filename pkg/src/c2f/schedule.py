"""Noise and blur schedules and the per-frequency diagonals they induce.

In the blur eigenbasis every schedule matrix is diagonal.  With effective
eigenvalues ``d`` (``1 - d`` for the fine-to-coarse ablation), blur exponent
``f(i)`` and its running sum ``F(i)``::

    A_i    = (1 - beta_i) * d ** (2 f(i))
    B_i    = 1 - A_i
    Abar_i = alpha_bar_i * d ** (2 F(i))

Step indices are 1-based, matching the chain ``x_0 -> x_1 -> ... -> x_N``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .spectral import DEFAULT_SIGMA, BlurOperator, make_operator

DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


class BlurType(str, enum.Enum):
    ZERO = "zero"
    LOG = "log"
    QUARTIC = "quartic"


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """``betas[i - 1]`` holds ``beta_i`` for ``i = 1..N``."""

    betas: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def beta(self, i):
        return self.betas[np.asarray(i) - 1]

    def alpha_bar(self, i):
        """``alpha_bar_i`` with ``alpha_bar_0 = 1``."""
        padded = np.concatenate([[1.0], self.alpha_bars])
        return padded[np.asarray(i)]


def linear_betas(n_steps: int = DEFAULT_STEPS, beta_start: float = DEFAULT_BETA_START,
                 beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidParameter(f"n_steps must be a positive integer, got {n_steps!r}")
    if not (0 < beta_start <= beta_end < 1):
        raise InvalidParameter(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start!r}, {beta_end!r})"
        )
    if n_steps == 1 and beta_start != beta_end:
        raise InvalidParameter("a single-step schedule needs beta_start == beta_end")
    betas = np.linspace(beta_start, beta_end, int(n_steps))
    betas.setflags(write=False)
    return NoiseSchedule(betas=betas)


@dataclass(frozen=True, eq=False)
class BlurSchedule:
    """Blur exponents ``values[i] = f(i)`` for ``i = 0..N`` and running sums
    ``cumsum[i] = F(i) = f(1) + ... + f(i)``."""

    f_type: BlurType
    f_end: float
    values: np.ndarray
    cumsum: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1


def blur_schedule(f_type, f_end: float, n_steps: int = DEFAULT_STEPS) -> BlurSchedule:
    """Quartic ``f(i) = f_end (i/N)^4``, log ``f(i) = f_end log(i) / log(N)``
    or identically zero; ``f(0) = 0`` in every case."""
    try:
        f_type = BlurType(f_type)
    except ValueError:
        raise InvalidParameter(f"unknown f_type {f_type!r}") from None
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidParameter(f"n_steps must be a positive integer, got {n_steps!r}")
    if not (np.isfinite(f_end) and f_end >= 0):
        raise InvalidParameter(f"f_end must be >= 0, got {f_end!r}")
    n = int(n_steps)
    i = np.arange(n + 1, dtype=float)
    if f_type is BlurType.ZERO:
        f_end = 0.0
        values = np.zeros(n + 1)
    elif f_type is BlurType.QUARTIC:
        values = f_end * (i / n) ** 4
    else:
        if n < 2:
            raise InvalidParameter("log blur schedule needs n_steps >= 2")
        values = np.zeros(n + 1)
        values[1:] = f_end * np.log(i[1:]) / np.log(n)
    values[0] = 0.0
    cumsum = np.cumsum(values)
    for arr in (values, cumsum):
        arr.setflags(write=False)
    return BlurSchedule(f_type=f_type, f_end=float(f_end), values=values, cumsum=cumsum)


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    noise: NoiseSchedule
    blur: BlurSchedule
    operator: BlurOperator
    fine_to_coarse: bool = False
    # score/eps conversion with (1 - Abar)^-1 instead of (1 - Abar)^-1/2
    paper_exponent: bool = False

    def __post_init__(self):
        if self.noise.n_steps != self.blur.n_steps:
            raise InvalidParameter(
                f"noise ({self.noise.n_steps}) and blur ({self.blur.n_steps}) step counts differ"
            )

    @property
    def n_steps(self) -> int:
        return self.noise.n_steps

    @property
    def eigvals(self) -> np.ndarray:
        """Effective field-shaped eigenvalues (``1 - d`` when fine-to-coarse)."""
        d = self.operator.eigvals
        return 1.0 - d if self.fine_to_coarse else d

    def check_index(self, i, lo: int = 1, hi: int | None = None):
        hi = self.n_steps if hi is None else hi
        arr = np.asarray(i)
        if arr.dtype.kind not in "iu" and not np.all(arr == np.round(arr)):
            raise InvalidParameter(f"step index must be an integer, got {i!r}")
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise InvalidParameter(f"step index {i!r} outside [{lo}, {hi}]")
        return arr.astype(int)

    def _per_freq(self, scalars: np.ndarray, exponents: np.ndarray) -> np.ndarray:
        # scalars/exponents have the index shape; broadcast against field axes
        pad = (1,) * self.operator.ndim
        scalars = np.reshape(scalars, scalars.shape + pad)
        exponents = np.reshape(exponents, exponents.shape + pad)
        return scalars * np.power(self.eigvals, exponents)

    def blur_diag(self, i) -> np.ndarray:
        """Spectral diagonal of ``W_i = W^f(i)``."""
        i = self.check_index(i, lo=0)
        return self._per_freq(np.ones(i.shape), self.blur.values[i])

    def diag_A(self, i) -> np.ndarray:
        i = self.check_index(i)
        return self._per_freq(1.0 - self.noise.beta(i), 2.0 * self.blur.values[i])

    def diag_B(self, i) -> np.ndarray:
        return 1.0 - self.diag_A(i)

    def diag_Abar(self, i) -> np.ndarray:
        """Closed form ``alpha_bar_i d^(2 F(i))``; accepts ``i = 0`` (all ones)."""
        i = self.check_index(i, lo=0)
        return self._per_freq(self.noise.alpha_bar(i), 2.0 * self.blur.cumsum[i])

    def terminal_deviation(self) -> float:
        """``max_k Abar_N[k]``: how far ``x_N`` is from pure noise."""
        return float(self.diag_Abar(self.n_steps).max())

    def fingerprint(self) -> dict:
        op = self.operator
        return {
            "n_steps": self.n_steps,
            "beta_start": float(self.noise.betas[0]),
            "beta_end": float(self.noise.betas[-1]),
            "sigma": op.kernel.sigma,
            "support": op.kernel.support,
            "axis_len": op.axis_len,
            "ndim": op.ndim,
            "f_type": self.blur.f_type.value,
            "f_end": self.blur.f_end,
            "fine_to_coarse": bool(self.fine_to_coarse),
            "paper_exponent": bool(self.paper_exponent),
        }


def make_schedule(axis_len: int, *, ndim: int = 2, n_steps: int = DEFAULT_STEPS,
                  beta_start: float = DEFAULT_BETA_START, beta_end: float = DEFAULT_BETA_END,
                  sigma: float = DEFAULT_SIGMA, support: int | None = None,
                  f_type="quartic", f_end: float = 0.14, fine_to_coarse: bool = False,
                  paper_exponent: bool = False) -> DiffusionSchedule:
    op = make_operator(axis_len, sigma=sigma, support=support, ndim=ndim)
    return DiffusionSchedule(
        noise=linear_betas(n_steps, beta_start, beta_end),
        blur=blur_schedule(f_type, f_end, n_steps),
        operator=op,
        fine_to_coarse=fine_to_coarse,
        paper_exponent=paper_exponent,
    )
