"""Reverse deblurring sampler.

Reading the forward step as ``x_i = x_{i-1} + f(x_{i-1}) + G z`` with
``f = -H`` and ``G = C^(1/2) = U B^(1/2) U^T``, the reverse diffusion
discretization is::

    x_{i-1} = x_i + H(x_i) + U B U^T s(x_i, i) + U B^(1/2) U^T z

i.e. unsharp masking followed by a score step that removes the noise the
sharpening amplified.  The reverse of forward step ``i`` uses schedule index
``i``; ``literal_index`` switches to index ``i + 1`` (clamped to ``N``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, InvalidState
from .forward import Trajectory, band_energies, high_pass, markov_step_blur
from .schedule import DiffusionSchedule
from .score import ScoreModel, eps_scale


@dataclass
class SamplerConfig:
    schedule: DiffusionSchedule
    model: ScoreModel
    final_noise: bool = False
    literal_index: bool = False
    seed: int = 0

    @property
    def n_steps(self) -> int:
        return self.schedule.n_steps


def schedule_index(cfg: SamplerConfig, i: int) -> int:
    cfg.schedule.check_index(i)
    return min(i + 1, cfg.n_steps) if cfg.literal_index else int(i)


def _noise(cfg, x, k, rng, z, add_noise):
    if not add_noise:
        return 0.0
    if z is None:
        z = rng.standard_normal(x.shape)
    return cfg.schedule.operator.apply_diagonal(z, np.sqrt(cfg.schedule.diag_B(k)))


def reverse_step_score(cfg: SamplerConfig, x, i: int, rng=None, z=None, add_noise: bool = True) -> np.ndarray:
    """One reverse step ``x_i -> x_{i-1}`` driven by the model's score."""
    s = cfg.schedule
    k = schedule_index(cfg, i)
    x = s.operator.check_shape(x)
    score = cfg.model.predict_score(x, i)
    out = x + high_pass(s, x, k - 1) + s.operator.apply_diagonal(score, s.diag_B(k))
    return out + _noise(cfg, x, k, rng, z, add_noise)


def reverse_step_eps(cfg: SamplerConfig, x, i: int, rng=None, z=None, add_noise: bool = True) -> np.ndarray:
    """Same step written with the noise prediction instead of the score."""
    s = cfg.schedule
    k = schedule_index(cfg, i)
    x = s.operator.check_shape(x)
    eps = cfg.model.predict_eps(x, i)
    out = x + high_pass(s, x, k - 1) - s.operator.apply_diagonal(eps, s.diag_B(k) * eps_scale(s, i))
    return out + _noise(cfg, x, k, rng, z, add_noise)


def vp_reverse_step(cfg: SamplerConfig, x, i: int, rng=None, z=None, add_noise: bool = True) -> np.ndarray:
    """Standard variance-preserving reverse diffusion step (no blur).

    ``x - (sqrt(1 - beta) - 1) x + beta s + sqrt(beta) z``, pixelwise.
    """
    k = schedule_index(cfg, i)
    beta = cfg.schedule.noise.beta(k)
    x = np.asarray(x, dtype=float)
    out = x - (np.sqrt(1.0 - beta) - 1.0) * x + beta * cfg.model.predict_score(x, i)
    if add_noise:
        if z is None:
            z = rng.standard_normal(x.shape)
        out = out + np.sqrt(beta) * z
    return out


def _signal_energy(cfg, x, i, n_bands):
    # Tweedie estimate of the noiseless component: xbar + (1 - Abar) sbar
    s = cfg.schedule
    score = cfg.model.predict_score(x, i)
    denoised = x + s.operator.apply_diagonal(score, 1.0 - s.diag_Abar(i))
    return band_energies(s, denoised, n_bands)


def sample(cfg: SamplerConfig, batch_size: int, stride: int | None = None, rng=None,
           step=reverse_step_score, n_bands: int = 2, x_init=None) -> Trajectory:
    """Draw ``x_N ~ N(0, I)`` and run the reverse chain down to ``x_0``.

    States at steps divisible by ``stride`` are kept (``x_N`` and ``x_0``
    always).  Metadata holds per-kept-step band energies of the state and of
    the denoised estimate of its noiseless component, plus ``signal_share``:
    the latter divided by the band energies of the final samples.
    """
    if int(batch_size) != batch_size or batch_size < 1:
        raise InvalidParameter(f"batch_size must be >= 1, got {batch_size!r}")
    s = cfg.schedule
    n = cfg.n_steps
    stride = n if stride is None else int(stride)
    if stride < 1:
        raise InvalidParameter("stride must be >= 1")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    shape = (int(batch_size),) + s.operator.field_shape
    x = rng.standard_normal(shape) if x_init is None else np.array(x_init, dtype=float)

    steps, states, energy, signal = [], [], [], []
    for i in range(n, 0, -1):
        if i == n or i % stride == 0:
            steps.append(i)
            states.append(x)
            energy.append(band_energies(s, x, n_bands))
            signal.append(_signal_energy(cfg, x, i, n_bands))
        x = step(cfg, x, i, rng, add_noise=cfg.final_noise or i > 1)
        if not np.all(np.isfinite(x)):
            raise InvalidState(f"non-finite state produced by reverse step {i}")
    steps.append(0)
    states.append(x)
    final = band_energies(s, x, n_bands)
    energy.append(final)
    signal.append(final)
    signal = np.array(signal)
    return Trajectory(
        steps=np.array(steps),
        states=np.stack(states),
        direction="reverse",
        metadata={
            "band_energy": np.array(energy),
            "signal_energy": signal,
            "signal_share": signal / np.where(final > 0, final, 1.0),
        },
    )


class _FixedScore(ScoreModel):
    def __init__(self, schedule, value):
        super().__init__(schedule)
        self.value = value

    def predict_score(self, x, i):
        return self.value


def _dense_sqrt_cov(s: DiffusionSchedule, i: int) -> np.ndarray:
    """``C_i^(1/2)`` from the dense pixel-space matrix ``I - (1-beta) W_i^2``."""
    op = s.operator
    u = op.eigvecs_1d
    d1 = (1.0 - op.eigvals_1d) if s.fine_to_coarse else op.eigvals_1d
    w1 = (u * d1 ** s.blur.values[i]) @ u.T
    w = w1 if op.ndim == 1 else np.kron(w1, w1)
    c = np.eye(w.shape[0]) - (1.0 - s.noise.beta(i)) * w @ w
    vals, vecs = np.linalg.eigh((c + c.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def discretization_contract_check(s: DiffusionSchedule, rng=None, indices=None, n_states: int = 8,
                                  dense_max: int = 256) -> list:
    """Compare forward/reverse steps with the generic difference-equation
    template ``x_{i+1} = x_i + f_i + G_i z`` and its reverse.

    Returns one dict per checked index with the maximum absolute deviations.
    ``G_i`` is taken from a dense matrix square root when the field has at
    most ``dense_max`` entries, otherwise from the eigenbasis.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    op = s.operator
    n = s.n_steps
    if indices is None:
        indices = sorted(set(np.linspace(1, n, min(n, 20)).round().astype(int)))
    shape = (n_states,) + op.field_shape
    flat = (n_states, op.size)
    dense = op.size <= dense_max
    is_zero = not np.any(s.blur.values)
    rows = []
    for i in indices:
        x = rng.standard_normal(shape)
        z = rng.standard_normal(shape)
        score = rng.standard_normal(shape)
        if dense:
            g = _dense_sqrt_cov(s, i)

            def apply_g(v, g=g):
                return (v.reshape(flat) @ g.T).reshape(shape)
        else:
            def apply_g(v, i=i):
                return op.apply_diagonal(v, np.sqrt(s.diag_B(i)))

        # forward template: x_i = x_{i-1} - H(x_{i-1}, i-1) + G z
        fwd = markov_step_blur(s, x, i, z=z)
        fwd_tpl = x - high_pass(s, x, i - 1) + apply_g(z)
        # reverse template: x_{i-1} = x_i - f + G G^T s + G z
        cfg = SamplerConfig(schedule=s, model=_FixedScore(s, score))
        rev = reverse_step_score(cfg, x, i, z=z)
        rev_tpl = x + high_pass(s, x, i - 1) + apply_g(apply_g(score)) + apply_g(z)
        lit = reverse_step_score(SamplerConfig(s, cfg.model, literal_index=True), x, i, z=z)
        row = {
            "i": int(i),
            "forward_dev": float(np.max(np.abs(fwd - fwd_tpl))),
            "reverse_dev": float(np.max(np.abs(rev - rev_tpl))),
            "literal_index_gap": float(np.max(np.abs(rev - lit))),
            "vp_forward_dev": float("nan"),
            "vp_reverse_dev": float("nan"),
        }
        if is_zero:
            beta = s.noise.beta(i)
            vp_fwd = np.sqrt(1.0 - beta) * x + np.sqrt(beta) * z
            vp_rev = vp_reverse_step(cfg, x, i, z=z)
            row["vp_forward_dev"] = float(np.max(np.abs(fwd - vp_fwd)))
            row["vp_reverse_dev"] = float(np.max(np.abs(rev - vp_rev)))
        rows.append(row)
    return rows
