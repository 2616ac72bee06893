"""Synthetic and image-folder datasets, each with an exact score oracle."""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameter
from .imageio import load_image_folder
from .score import MixtureScoreOracle
from .spectral import BlurOperator


class MixtureData:
    """Equal-weight mixture of Gaussians with spectral-diagonal covariance.

    ``var = 0`` makes it the empirical distribution over ``means``.
    """

    def __init__(self, op: BlurOperator, means, var=0.0, name: str = "mixture"):
        self.op = op
        means = np.asarray(means, dtype=float)
        if means.shape == op.field_shape:
            means = means[None]
        self.means = op.check_shape(means)
        self.var = np.broadcast_to(np.asarray(var, dtype=float), op.field_shape).copy()
        self.name = name

    def __len__(self):
        return len(self.means)

    def draw(self, rng, k: int) -> np.ndarray:
        comp = rng.integers(0, len(self.means), size=k)
        x = self.means[comp]
        if np.any(self.var > 0):
            noise = rng.standard_normal((k,) + self.op.field_shape)
            x = x + self.op.to_pixel(np.sqrt(self.var) * noise)
        return x

    def component_of(self, x) -> np.ndarray:
        """Index of the nearest mean for each field in ``x``."""
        flat = np.asarray(x).reshape(-1, self.op.size)
        means = self.means.reshape(len(self.means), -1)
        d = ((flat[:, None, :] - means[None]) ** 2).sum(-1)
        return d.argmin(axis=1)

    def oracle(self, schedule) -> MixtureScoreOracle:
        return MixtureScoreOracle(schedule, self.means, data_var=self.var)

    def covariance(self) -> np.ndarray:
        """Exact covariance of the flattened distribution."""
        op = self.op
        basis = op.to_pixel(np.eye(op.size).reshape((op.size,) + op.field_shape)).reshape(op.size, -1)
        within = basis.T @ (self.var.reshape(-1)[:, None] * basis)
        flat = self.means.reshape(len(self.means), -1)
        centered = flat - flat.mean(axis=0)
        return within + centered.T @ centered / len(flat)


def ramp_pattern(op: BlurOperator) -> np.ndarray:
    """Smooth zero-mean pattern in ``[-1, 1]``: a ramp along each axis."""
    r = np.linspace(-1.0, 1.0, op.axis_len)
    if op.ndim == 1:
        return r
    return (r[:, None] + r[None, :]) / 2.0


def make_dataset(cfg, op: BlurOperator) -> MixtureData:
    """Dataset named by ``cfg.dataset``.

    gaussian: zero mean, spectral std ``data_scale * d ** spectral_decay``;
    two-point: ``+-data_scale * ramp``; gmm: ``gmm_components`` random means
    drawn like the gaussian case, each with spectral variance ``gmm_var``;
    folder: images under ``dataset_path`` resized to ``image_size``.
    """
    smooth_std = cfg.data_scale * op.eigvals**cfg.spectral_decay
    if cfg.dataset == "gaussian":
        return MixtureData(op, np.zeros(op.field_shape), smooth_std**2, name="gaussian")
    if cfg.dataset == "two-point":
        a = cfg.data_scale * ramp_pattern(op)
        return MixtureData(op, np.stack([a, -a]), 0.0, name="two-point")
    if cfg.dataset == "gmm":
        rng = np.random.default_rng([cfg.seed, 7919])
        coeffs = smooth_std * rng.standard_normal((cfg.gmm_components,) + op.field_shape)
        return MixtureData(op, op.to_pixel(coeffs), cfg.gmm_var, name="gmm")
    if op.ndim != 2:
        raise InvalidParameter("image folders need field_ndim = 2")
    images = load_image_folder(cfg.dataset_path, cfg.image_size)
    return MixtureData(op, images.items, 0.0, name="folder")
