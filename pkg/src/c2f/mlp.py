"""Small fully connected noise predictor trained on the simple noise-matching
loss, with hand-written backprop in float64 so gradients can be checked
against finite differences."""

from __future__ import annotations

import logging

import numpy as np

from .errors import InvalidParameter, InvalidState
from .forward import ForwardSample
from .score import ScoreModel, _weights, make_batch

log = logging.getLogger(__name__)

GRAD_CHECK_TOL = 1e-4


def _silu(a):
    sig = 1.0 / (1.0 + np.exp(-a))
    return a * sig, sig


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features of ``t = i / N`` with geometric frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    freqs = np.geomspace(1.0, 1000.0, dim // 2)
    arg = t[:, None] * freqs[None]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


class MLPScoreModel(ScoreModel):
    """``epsbar = MLP([xbar, emb(i / N)])`` over flattened spectral coefficients.

    Parameters live in one flat vector ``theta``; ``layers`` are views into it.
    """

    def __init__(self, schedule, hidden: int = 64, depth: int = 2, embed_dim: int = 16, seed: int = 0):
        super().__init__(schedule)
        if hidden < 1 or depth < 1 or embed_dim < 2 or embed_dim % 2:
            raise InvalidParameter("need hidden >= 1, depth >= 1 and an even embed_dim >= 2")
        self.hidden, self.depth, self.embed_dim = int(hidden), int(depth), int(embed_dim)
        dim = schedule.operator.size
        self.sizes = [dim + self.embed_dim] + [self.hidden] * self.depth + [dim]
        self.shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.shapes += [(fan_in, fan_out), (fan_out,)]
        self.theta = np.zeros(sum(int(np.prod(s)) for s in self.shapes))
        rng = np.random.default_rng(seed)
        for k, w in enumerate(self.layers()[0::2]):
            scale = np.sqrt(1.0 / w.shape[0]) if k < self.depth else 0.1 * np.sqrt(1.0 / w.shape[0])
            w[...] = rng.standard_normal(w.shape) * scale

    def layers(self, theta=None) -> list:
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            out.append(theta[pos:pos + size].reshape(shape))
            pos += size
        return out

    @property
    def n_params(self) -> int:
        return self.theta.size

    def _inputs(self, x, i):
        s = self.schedule
        op = s.operator
        i = s.check_index(i)
        x = op.check_shape(x)
        lead = x.shape[: x.ndim - op.ndim]
        xbar = op.to_spectral(x).reshape(-1, op.size)
        emb = timestep_embedding(i / s.n_steps, self.embed_dim)
        if emb.shape[0] != xbar.shape[0]:
            emb = np.broadcast_to(emb, (xbar.shape[0], self.embed_dim))
        return np.concatenate([xbar, emb], axis=1), lead

    def _forward(self, inp, theta=None):
        params = self.layers(theta)
        h, cache = inp, []
        for k in range(0, len(params), 2):
            w, b = params[k], params[k + 1]
            a = h @ w + b
            cache.append((h, a))
            if k + 2 < len(params):
                h, _ = _silu(a)
            else:
                h = a
        return h, cache

    def predict_eps(self, x, i) -> np.ndarray:
        op = self.schedule.operator
        inp, lead = self._inputs(x, i)
        out, _ = self._forward(inp)
        return op.to_pixel(out.reshape(lead + op.field_shape))

    def loss_and_grad(self, batch: ForwardSample, weight=None, theta=None):
        """Simple noise-matching loss and its gradient w.r.t. ``theta``."""
        op = self.schedule.operator
        inp, _ = self._inputs(batch.state, batch.step)
        target = op.to_spectral(batch.eps).reshape(-1, op.size)
        out, cache = self._forward(inp, theta)
        lam = _weights(batch.step, weight).reshape(-1)
        lam = np.broadcast_to(lam, (out.shape[0],))
        resid = out - target
        loss = float(np.mean(lam * np.sum(resid**2, axis=1)))

        params = self.layers(theta)
        grads = [None] * len(params)
        delta = 2.0 * lam[:, None] * resid / out.shape[0]
        for k in range(len(params) - 2, -1, -2):
            h, a = cache[k // 2]
            if k + 2 < len(params):
                act, sig = _silu(a)
                delta = delta * (sig + act * (1.0 - sig))
            grads[k] = h.T @ delta
            grads[k + 1] = delta.sum(axis=0)
            delta = delta @ params[k].T
        return loss, np.concatenate([g.ravel() for g in grads])

    def parameters(self) -> dict:
        return {"theta": self.theta}

    def load_parameters(self, params: dict):
        theta = np.array(params["theta"], dtype=float)
        if theta.shape != self.theta.shape:
            raise InvalidParameter(f"parameter vector has {theta.size} entries, expected {self.theta.size}")
        self.theta = theta


def gradient_check(model: MLPScoreModel, batch: ForwardSample, n_coords: int = 32, h: float = 1e-4,
                   rng=None, weight=None) -> float:
    """Max relative error of analytic vs central-difference gradients on a
    random subset of parameters.

    ``h = 1e-4`` balances truncation (``O(h^2)``) against float64 round-off
    in the summed loss, which dominates below ``h ~ 1e-5``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    _, grad = model.loss_and_grad(batch, weight)
    coords = rng.choice(model.n_params, size=min(n_coords, model.n_params), replace=False)
    worst = 0.0
    for c in coords:
        theta = model.theta.copy()
        theta[c] += h
        up, _ = model.loss_and_grad(batch, weight, theta)
        theta[c] -= 2 * h
        down, _ = model.loss_and_grad(batch, weight, theta)
        numeric = (up - down) / (2 * h)
        denom = max(abs(numeric), abs(grad[c]), 1e-6)
        worst = max(worst, abs(numeric - grad[c]) / denom)
    return worst


def train_mlp(model: MLPScoreModel, dataset, steps: int, rng, lr: float = 1e-3, batch_size: int = 128,
              weight=None, check_gradients: bool = True, log_every: int = 0) -> list:
    """Adam on the simple noise-matching loss; returns the per-step losses."""
    if lr <= 0:
        raise InvalidParameter(f"learning rate must be positive, got {lr!r}")
    if steps < 0:
        raise InvalidParameter(f"steps must be >= 0, got {steps!r}")
    s = model.schedule
    if check_gradients and steps > 0:
        err = gradient_check(model, make_batch(s, dataset, min(batch_size, 32), rng), weight=weight)
        if err > GRAD_CHECK_TOL:
            raise InvalidState(f"gradient check failed at init: max relative error {err:.3e}")
    m = np.zeros_like(model.theta)
    v = np.zeros_like(model.theta)
    b1, b2, tiny = 0.9, 0.999, 1e-8
    history = []
    for t in range(1, steps + 1):
        batch = make_batch(s, dataset, batch_size, rng)
        loss, grad = model.loss_and_grad(batch, weight)
        if not np.isfinite(loss):
            raise InvalidState(f"non-finite training loss at step {t}")
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad**2
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        model.theta = model.theta - lr * mhat / (np.sqrt(vhat) + tiny)
        history.append(loss)
        if log_every and t % log_every == 0:
            log.info("step %d loss %.5f", t, float(np.mean(history[-log_every:])))
    return history
