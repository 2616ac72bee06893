"""Score and noise predictors, and the denoising score matching objectives.

A model predicts either the score ``grad log q_i(x)`` or the noise ``eps``;
the two are tied by a diagonal rescaling in the blur eigenbasis::

    score = -U (1 - Abar_i)^(-1/2) U^T eps

(``-1`` instead of ``-1/2`` when the schedule has ``paper_exponent`` set).
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInput, InvalidParameter, InvalidState
from .forward import ForwardSample, marginal_sample
from .schedule import DiffusionSchedule

RIDGE = 1e-6


def eps_scale(s: DiffusionSchedule, i) -> np.ndarray:
    """Spectral diagonal mapping ``-eps`` to the score."""
    abar = s.diag_Abar(s.check_index(i))
    power = 1.0 if s.paper_exponent else 0.5
    return (1.0 - abar) ** -power


def eps_to_score(s: DiffusionSchedule, eps, i) -> np.ndarray:
    return -s.operator.apply_diagonal(eps, eps_scale(s, i))


def score_to_eps(s: DiffusionSchedule, score, i) -> np.ndarray:
    return -s.operator.apply_diagonal(score, 1.0 / eps_scale(s, i))


class ScoreModel:
    """Base predictor; subclasses override one of the two ``predict_*``.

    ``x`` carries any number of leading batch axes; ``i`` is a scalar step or
    one step per item of a single leading batch axis.
    """

    def __init__(self, schedule: DiffusionSchedule):
        self.schedule = schedule

    def predict_eps(self, x, i) -> np.ndarray:
        if type(self).predict_score is ScoreModel.predict_score:
            raise NotImplementedError("override predict_eps or predict_score")
        return score_to_eps(self.schedule, self.predict_score(x, i), i)

    def predict_score(self, x, i) -> np.ndarray:
        if type(self).predict_eps is ScoreModel.predict_eps:
            raise NotImplementedError("override predict_eps or predict_score")
        return eps_to_score(self.schedule, self.predict_eps(x, i), i)


class MixtureScoreOracle(ScoreModel):
    """Exact score of the diffused mixture of equally weighted components.

    Component ``m`` is Gaussian with mean ``means[m]`` and spectral (diagonal
    in the blur eigenbasis) variance ``data_var``; ``data_var = 0`` gives the
    empirical distribution of the points in ``means``.  After ``i`` steps each
    component is Gaussian with spectral mean ``sqrt(Abar_i) mbar_m`` and
    variance ``Abar_i data_var + 1 - Abar_i``.
    """

    def __init__(self, schedule: DiffusionSchedule, means, data_var=0.0):
        super().__init__(schedule)
        op = schedule.operator
        means = np.asarray(means, dtype=float)
        if means.size == 0:
            raise InvalidState("mixture oracle needs at least one data point")
        if means.shape == op.field_shape:
            means = means[None]
        self.means = op.check_shape(means)
        self.means_bar = op.to_spectral(self.means)
        self.data_var = np.broadcast_to(np.asarray(data_var, dtype=float), op.field_shape)
        if np.any(self.data_var < 0):
            raise InvalidParameter("data_var must be non-negative")

    def _components(self, x, i):
        s = self.schedule
        op = s.operator
        x = op.check_shape(x)
        i = s.check_index(i)
        single = x.ndim == op.ndim
        xbar = op.to_spectral(x.reshape((-1,) + op.field_shape))
        abar = s.diag_Abar(i)
        if abar.ndim == op.ndim:
            abar = abar[None]
        var = abar * self.data_var + (1.0 - abar)  # (B|1, *f)
        mu = np.sqrt(abar)[:, None] * self.means_bar[None]  # (B|1, M, *f)
        diff = mu - xbar[:, None]
        axes = tuple(range(2, 2 + op.ndim))
        logits = -0.5 * np.sum(diff**2 / var[:, None], axis=axes)
        return x.shape, single, diff, var, logits

    def predict_score(self, x, i) -> np.ndarray:
        op = self.schedule.operator
        shape, single, diff, var, logits = self._components(x, i)
        w = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        w = w.reshape(w.shape + (1,) * op.ndim)
        score_bar = np.sum(w * diff, axis=1) / var
        score = op.to_pixel(score_bar)
        return score[0] if single else score.reshape(shape)

    def log_density(self, x, i) -> np.ndarray:
        op = self.schedule.operator
        shape, single, diff, var, logits = self._components(x, i)
        axes = tuple(range(1, 1 + op.ndim))
        norm = -0.5 * np.sum(np.log(2.0 * np.pi * var), axis=axes)
        out = logsumexp(logits, axis=1) - np.log(logits.shape[1]) + norm
        return out[0] if single else out.reshape(shape[: len(shape) - op.ndim])


def oracle_score(o: MixtureScoreOracle, x, i) -> np.ndarray:
    return o.predict_score(x, i)


class LinearScoreModel(ScoreModel):
    """Per-step affine noise predictor, diagonal in the blur eigenbasis:
    ``epsbar = slope_i * xbar + bias_i``."""

    def __init__(self, schedule: DiffusionSchedule):
        super().__init__(schedule)
        shape = (schedule.n_steps,) + schedule.operator.field_shape
        self.slope = np.zeros(shape)
        self.bias = np.zeros(shape)

    def predict_eps(self, x, i) -> np.ndarray:
        s = self.schedule
        op = s.operator
        i = s.check_index(i)
        xbar = op.to_spectral(x)
        return op.to_pixel(self.slope[i - 1] * xbar + self.bias[i - 1])

    def parameters(self) -> dict:
        return {"slope": self.slope, "bias": self.bias}

    def load_parameters(self, params: dict):
        self.slope = np.array(params["slope"], dtype=float)
        self.bias = np.array(params["bias"], dtype=float)


def draw_data(dataset, rng, k: int) -> np.ndarray:
    """``k`` draws from an object with ``draw(rng, k)`` or rows of an array."""
    if hasattr(dataset, "draw"):
        return dataset.draw(rng, k)
    data = np.asarray(dataset, dtype=float)
    return data[rng.integers(0, len(data), size=k)]


def fit_linear(model: LinearScoreModel, dataset, samples_per_step: int, rng) -> LinearScoreModel:
    """Least-squares fit of every step's per-frequency affine map.

    A frequency whose input variance vanishes falls back to a ridge penalty
    of ``RIDGE`` on the slope.
    """
    if samples_per_step < 2:
        raise InvalidParameter("samples_per_step must be >= 2")
    s = model.schedule
    op = s.operator
    for i in range(1, s.n_steps + 1):
        x0 = draw_data(dataset, rng, samples_per_step)
        fs = marginal_sample(s, x0, i, rng)
        xbar = op.to_spectral(fs.state)
        ebar = op.to_spectral(fs.eps)
        mx, me = xbar.mean(axis=0), ebar.mean(axis=0)
        dx = xbar - mx
        var = np.mean(dx**2, axis=0)
        cov = np.mean(dx * (ebar - me), axis=0)
        denom = np.where(var > 1e-12, var, var + RIDGE)
        slope = cov / denom
        model.slope[i - 1] = slope
        model.bias[i - 1] = me - slope * mx
    return model


def _require_eps(batch: ForwardSample):
    if batch.eps is None:
        raise InvalidInput("loss needs samples that retain their noise draw eps")


def _weights(step, weight):
    step = np.asarray(step)
    if weight is None:
        return np.ones(step.shape)
    return np.asarray(weight(step), dtype=float) * np.ones(step.shape)


def _sq_norm(s: DiffusionSchedule, v: np.ndarray, step) -> np.ndarray:
    op = s.operator
    sq = np.sum(v**2, axis=op.field_axes)
    step = np.asarray(step)
    if step.ndim == 0:
        return sq.reshape(-1)
    return sq.reshape(step.shape)


def _mean_loss(s, v, batch, weight) -> float:
    per_item = _sq_norm(s, v, batch.step)
    w = _weights(batch.step, weight)
    return float(np.mean(w * per_item))


def loss_dsm(model: ScoreModel, batch: ForwardSample, weight=None) -> float:
    """Mean ``lambda(i) ||s(x_i, i) - grad log q(x_i | x_0)||^2``."""
    _require_eps(batch)
    s = model.schedule
    target = eps_to_score(s, batch.eps, batch.step)
    return _mean_loss(s, model.predict_score(batch.state, batch.step) - target, batch, weight)


def loss_eps_weighted(model: ScoreModel, batch: ForwardSample, weight=None) -> float:
    """Noise matching with the spectral weighting kept inside the norm."""
    _require_eps(batch)
    s = model.schedule
    resid = model.predict_eps(batch.state, batch.step) - batch.eps
    return _mean_loss(s, s.operator.apply_diagonal(resid, eps_scale(s, batch.step)), batch, weight)


def loss_eps_simple(model: ScoreModel, batch: ForwardSample, weight=None) -> float:
    """Mean ``lambda(i) ||eps_hat(x_i, i) - eps||^2``, the training loss."""
    _require_eps(batch)
    resid = model.predict_eps(batch.state, batch.step) - batch.eps
    return _mean_loss(model.schedule, resid, batch, weight)


def make_batch(s: DiffusionSchedule, dataset, size: int, rng) -> ForwardSample:
    """Marginal samples at uniformly drawn steps, one step per item."""
    x0 = draw_data(dataset, rng, size)
    steps = rng.integers(1, s.n_steps + 1, size=size)
    return marginal_sample(s, x0, steps, rng)
