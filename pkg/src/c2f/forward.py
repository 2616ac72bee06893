"""Forward chains: blur diffusion in pixel space, the equivalent diagonal chain
in the blur eigenbasis, and the closed-form marginal ``q(x_i | x_0)``.

Every stochastic function takes an explicit ``numpy.random.Generator`` and
optionally the standard-normal draw itself, so two routes can be compared
under shared randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter
from .evalx import band_energy
from .schedule import DiffusionSchedule
from .spectral import frequency_bands


@dataclass
class ForwardSample:
    """State ``x_i`` together with the pixel-space draw ``eps`` that built it.

    ``step`` and ``x0_ref`` may be scalars or per-item arrays for batches.
    """

    step: object
    state: np.ndarray
    eps: np.ndarray | None
    x0_ref: object = None


@dataclass
class Trajectory:
    steps: np.ndarray
    states: np.ndarray  # (n_recorded, *batch, *field)
    direction: str
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.steps)


def _normal(rng, shape, given):
    if given is not None:
        return np.asarray(given, dtype=float)
    return rng.standard_normal(shape)


def markov_step_blur(s: DiffusionSchedule, x_prev, i: int, rng=None, z=None) -> np.ndarray:
    """``x_i = sqrt(1 - beta_i) W_i x_{i-1} + C_i^(1/2) z`` with
    ``C_i = I - (1 - beta_i) W_i^2``."""
    s.check_index(i)
    op = s.operator
    x_prev = op.check_shape(x_prev)
    z = _normal(rng, x_prev.shape, z)
    blurred = np.sqrt(1.0 - s.noise.beta(i)) * op.apply_diagonal(x_prev, s.blur_diag(i))
    return blurred + op.apply_diagonal(z, np.sqrt(s.diag_B(i)))


def markov_step_generalized(s: DiffusionSchedule, xbar_prev, i: int, rng=None, zbar=None) -> np.ndarray:
    """Diagonal chain ``xbar_i = A_i^(1/2) xbar_{i-1} + B_i^(1/2) zbar`` on
    spectral coefficients."""
    s.check_index(i)
    xbar_prev = s.operator.check_shape(xbar_prev)
    zbar = _normal(rng, xbar_prev.shape, zbar)
    return np.sqrt(s.diag_A(i)) * xbar_prev + np.sqrt(s.diag_B(i)) * zbar


def marginal_mean(s: DiffusionSchedule, x0, i) -> np.ndarray:
    """Noiseless component ``U Abar_i^(1/2) U^T x_0``."""
    return s.operator.apply_diagonal(x0, np.sqrt(s.diag_Abar(i)))


def marginal_sample(s: DiffusionSchedule, x0, i, rng=None, eps=None, x0_ref=None) -> ForwardSample:
    """Draw ``x_i`` directly from ``x_0``.

    ``i`` may be a scalar or one step per leading batch item of ``x0``.
    """
    op = s.operator
    x0 = op.check_shape(x0)
    i = s.check_index(i)
    eps = _normal(rng, x0.shape, eps)
    abar = s.diag_Abar(i)
    state = op.apply_diagonal(x0, np.sqrt(abar)) + op.apply_diagonal(eps, np.sqrt(1.0 - abar))
    return ForwardSample(step=i if i.ndim else int(i), state=state, eps=eps, x0_ref=x0_ref)


def high_pass(s: DiffusionSchedule, x, i: int) -> np.ndarray:
    """Unnormalized high-pass ``H(x, i) = x - sqrt(1 - beta_{i+1}) W_{i+1} x``
    for ``0 <= i <= N - 1``."""
    s.check_index(i, lo=0, hi=s.n_steps - 1)
    op = s.operator
    x = op.check_shape(x)
    gain = np.sqrt(1.0 - s.noise.beta(i + 1)) * s.blur_diag(i + 1)
    return op.apply_diagonal(x, 1.0 - gain)


def band_retention(s: DiffusionSchedule, i, n_bands: int = 2, x0=None) -> np.ndarray:
    """Fraction of each band's energy kept by the noiseless component.

    With ``x0`` the ratio is energy-weighted by that datum's spectrum;
    without it each frequency counts equally (band average of ``Abar_i``).
    """
    op = s.operator
    labels = frequency_bands(op, n_bands)
    abar = s.diag_Abar(i)
    if x0 is None:
        weights = np.ones(op.field_shape)
    else:
        xbar = op.to_spectral(x0)
        weights = np.sum(xbar**2, axis=tuple(range(xbar.ndim - op.ndim)))
    out = []
    for b in range(n_bands):
        mask = labels == b
        w = weights[mask]
        num = np.sum(abar[..., mask] * w, axis=-1)
        out.append(num / w.sum())
    return np.stack(out, axis=-1)


def band_energies(s: DiffusionSchedule, x, n_bands: int = 2) -> np.ndarray:
    """Band energies averaged over any leading batch axes."""
    op = s.operator
    e = band_energy(op, x, n_bands)
    return e.reshape(-1, n_bands).mean(axis=0)


def forward_trajectory(s: DiffusionSchedule, x0, rng, stride: int = 100, n_bands: int = 2) -> Trajectory:
    """Run the blur chain ``x_0 -> x_N`` and keep every ``stride``-th state.

    The final state ``x_N`` is always kept.  Metadata per kept step:
    ``band_energy`` of the noisy state and ``signal_retention`` of the
    noiseless component, both shaped ``(n_kept, n_bands)``.
    """
    if int(stride) != stride or stride < 1:
        raise InvalidParameter(f"stride must be a positive integer, got {stride!r}")
    x = s.operator.check_shape(x0).copy()
    steps, states, energy, retention = [], [], [], []

    def record(i, state):
        steps.append(i)
        states.append(state)
        energy.append(band_energies(s, state, n_bands))
        retention.append(band_retention(s, i, n_bands, x0=x0))

    record(0, x)
    for i in range(1, s.n_steps + 1):
        x = markov_step_blur(s, x, i, rng)
        if i % stride == 0 or i == s.n_steps:
            record(i, x)
    return Trajectory(
        steps=np.array(steps),
        states=np.stack(states),
        direction="forward",
        metadata={"band_energy": np.array(energy), "signal_retention": np.array(retention)},
    )
