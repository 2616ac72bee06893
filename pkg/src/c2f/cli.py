"""``c2f`` command line: schedule, forward, train, sample, eval, check.

Every command reads an optional flat config file, applies ``--set key=value``
overrides, writes its artifacts (CSV, PGM, PNG figures, checkpoints) to the
output directory and is deterministic given the seed.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .checkpoint import load_checkpoint, model_fingerprint, save_checkpoint, verify_fingerprint
from .config import ExperimentConfig
from .data import make_dataset
from .errors import InvalidInput, InvalidParameter, InvalidState
from .evalx import band_energy, cov_relative_error, fit_gaussian, frechet_distance, mean_error
from .forward import forward_trajectory, markov_step_blur, markov_step_generalized
from .imageio import image_grid, load_fields, read_image, write_csv, write_fields_csv, write_pgm
from .mlp import MLPScoreModel, train_mlp
from .sampler import SamplerConfig, discretization_contract_check, sample
from .schedule import make_schedule
from .score import LinearScoreModel, fit_linear, make_batch
from .spectral import frequency_bands

log = logging.getLogger("c2f")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2
EXIT_THRESHOLD = 3

CHECKPOINT_NAME = "checkpoint.c2f"
LOSS_BINS = 20


class Experiment:
    """Resolved config plus the schedule and dataset it implies."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.schedule = make_schedule(cfg.image_size, **cfg.schedule_kwargs())
        self.out = Path(cfg.out_dir)
        self._data = None

    @property
    def op(self):
        return self.schedule.operator

    @property
    def data(self):
        if self._data is None:
            self._data = make_dataset(self.cfg, self.op)
        return self._data

    def rng(self, *stream):
        return np.random.default_rng([self.cfg.seed, *stream])

    def path(self, name) -> Path:
        return self.out / name

    def model_hyper(self) -> dict:
        cfg = self.cfg
        if cfg.model == "mlp":
            return {"hidden": cfg.mlp_hidden, "depth": cfg.mlp_depth, "embed": cfg.mlp_embed}
        return {}

    def fingerprint(self) -> dict:
        return model_fingerprint(self.schedule, self.cfg.model, self.model_hyper())

    def new_model(self):
        cfg = self.cfg
        if cfg.model == "linear":
            return LinearScoreModel(self.schedule)
        if cfg.model == "mlp":
            return MLPScoreModel(self.schedule, hidden=cfg.mlp_hidden, depth=cfg.mlp_depth,
                                 embed_dim=cfg.mlp_embed, seed=cfg.seed)
        return self.data.oracle(self.schedule)

    def load_model(self, checkpoint=None):
        if self.cfg.model == "oracle":
            return self.data.oracle(self.schedule)
        path = Path(checkpoint) if checkpoint else self.path(CHECKPOINT_NAME)
        if not path.exists():
            raise InvalidInput(f"checkpoint not found: {path}")
        header, arrays = load_checkpoint(path)
        verify_fingerprint(header, self.fingerprint())
        model = self.new_model()
        model.load_parameters(arrays)
        return model


# --- helpers -----------------------------------------------------------------

def _band_cols(prefix, n):
    return [f"{prefix}_band{b}" for b in range(n)]


def _per_item_loss(ex, model, batch):
    resid = model.predict_eps(batch.state, batch.step) - batch.eps
    return np.sum(resid**2, axis=ex.op.field_axes)


def _loss_table(ex, model, batch):
    """Per-step-bin mean losses of ``model`` and the dataset oracle."""
    oracle = ex.data.oracle(ex.schedule)
    m = _per_item_loss(ex, model, batch)
    o = _per_item_loss(ex, oracle, batch)
    n = ex.schedule.n_steps
    edges = np.unique(np.linspace(1, n + 1, min(LOSS_BINS, n) + 1).round().astype(int))
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (batch.step >= lo) & (batch.step < hi)
        if sel.any():
            rows.append([int(lo), int(hi - 1), int(sel.sum()), m[sel].mean(), o[sel].mean()])
    return float(m.mean()), float(o.mean()), rows


def _write_metrics(path, metrics):
    write_csv(path, ["metric", "value"], [[k, v] for k, v in metrics.items()])


# --- commands ----------------------------------------------------------------

def cmd_schedule(ex: Experiment) -> int:
    s = ex.schedule
    n = s.n_steps
    steps = np.arange(1, n + 1)
    abar = s.diag_Abar(steps).reshape(n, -1)
    qs = (0, 25, 50, 75, 100)
    quant = np.percentile(abar, qs, axis=1).T
    labels = frequency_bands(ex.op, ex.cfg.n_bands)
    band_means = np.stack([abar[:, labels.ravel() == b].mean(axis=1) for b in range(ex.cfg.n_bands)], axis=1)
    header = ["i", "f", "beta", "alpha_bar"] + [f"abar_q{q}" for q in qs] + _band_cols("abar_mean", ex.cfg.n_bands)
    rows = (
        [i, s.blur.values[i], s.noise.beta(i), s.noise.alpha_bar(i), *quant[i - 1], *band_means[i - 1]]
        for i in steps
    )
    write_csv(ex.path("schedule.csv"), header, rows)
    plotting.plot_schedule(steps, s.blur.values[1:], s.noise.alpha_bars, quant,
                           [f"q{q}" for q in qs], ex.path("schedule.png"))
    log.info("terminal deviation max Abar_N = %.3e", s.terminal_deviation())
    return EXIT_OK


def cmd_forward(ex: Experiment, image=None) -> int:
    cfg = ex.cfg
    op = ex.op
    if image is not None:
        x0 = read_image(image)
        if op.ndim == 1 and x0.ndim == 2 and x0.shape[0] == 1:
            x0 = x0[0]
        if x0.shape != op.field_shape:
            raise InvalidInput(f"image {image} has shape {x0.shape}, expected {op.field_shape}")
    else:
        x0 = ex.data.draw(ex.rng(1), 1)[0]
    traj = forward_trajectory(ex.schedule, x0, ex.rng(2), stride=cfg.stride, n_bands=cfg.n_bands)
    write_pgm(ex.path("forward_strip.pgm"), image_grid(traj.states, ncols=len(traj)))
    nb = cfg.n_bands
    header = ["step", "f"] + _band_cols("energy", nb) + _band_cols("retention", nb)
    rows = (
        [int(i), ex.schedule.blur.values[i], *e, *r]
        for i, e, r in zip(traj.steps, traj.metadata["band_energy"], traj.metadata["signal_retention"])
    )
    write_csv(ex.path("forward_bands.csv"), header, rows)
    plotting.plot_bands(traj.steps, traj.metadata["signal_retention"], ex.path("forward_bands.png"),
                        "noiseless signal retention", "forward: per-band signal retention", log=True)
    return EXIT_OK


def cmd_train(ex: Experiment, resume=None) -> int:
    cfg = ex.cfg
    if cfg.model == "oracle":
        raise InvalidParameter("oracle needs no training; set model = linear or mlp")
    model = ex.new_model()
    fingerprint = ex.fingerprint()
    if resume:
        header, arrays = load_checkpoint(resume)
        verify_fingerprint(header, fingerprint)
        model.load_parameters(arrays)
    rng = ex.rng(3)
    if cfg.model == "linear":
        if cfg.train_steps > 0:
            fit_linear(model, ex.data, cfg.samples_per_step, rng)
        history = []
    else:
        history = train_mlp(model, ex.data, cfg.train_steps, rng, lr=cfg.learning_rate,
                            batch_size=cfg.batch_size, log_every=max(1, cfg.train_steps // 10))
    save_checkpoint(ex.path(CHECKPOINT_NAME), cfg.model, fingerprint, model.parameters(),
                    extra={"train_steps": cfg.train_steps})

    batch = make_batch(ex.schedule, ex.data, cfg.eval_batch, ex.rng(4))
    model_loss, oracle_loss, table = _loss_table(ex, model, batch)
    write_csv(ex.path("loss_by_step.csv"), ["step_lo", "step_hi", "count", "model_loss", "oracle_loss"], table)
    if history:
        write_csv(ex.path("train_loss.csv"), ["iteration", "loss"], enumerate(history, 1))
        plotting.plot_loss(np.arange(1, len(history) + 1), history, ex.path("train_loss.png"),
                           "iteration", reference=oracle_loss)
    else:
        mid = [(r[0] + r[1]) / 2 for r in table]
        plotting.plot_loss(mid, [r[3] for r in table], ex.path("train_loss.png"), "step i")
    _write_metrics(ex.path("train_summary.csv"), {
        "model_loss": model_loss,
        "oracle_loss": oracle_loss,
        "loss_ratio": model_loss / oracle_loss,
    })
    log.info("held-out loss %.5f (oracle %.5f)", model_loss, oracle_loss)
    return EXIT_OK


def cmd_sample(ex: Experiment, checkpoint=None) -> int:
    cfg = ex.cfg
    model = ex.load_model(checkpoint)
    sc = SamplerConfig(ex.schedule, model, final_noise=cfg.final_noise,
                       literal_index=cfg.literal_index, seed=cfg.seed)
    traj = sample(sc, cfg.n_samples, stride=cfg.stride, rng=ex.rng(5), n_bands=cfg.n_bands)
    x = traj.states[-1]
    write_fields_csv(ex.path("samples.csv"), x, ex.op.ndim)
    ncols = math.ceil(math.sqrt(len(x))) if ex.op.ndim == 2 else 1
    write_pgm(ex.path("samples.pgm"), image_grid(x, ncols=ncols))
    chains = min(8, len(x))
    strip = [traj.states[k, c] for c in range(chains) for k in range(len(traj))]
    write_pgm(ex.path("sample_strip.pgm"), image_grid(strip, ncols=len(traj)))

    nb = cfg.n_bands
    header = ["step"] + _band_cols("energy", nb) + _band_cols("signal_share", nb)
    rows = (
        [int(i), *e, *sh]
        for i, e, sh in zip(traj.steps, traj.metadata["band_energy"], traj.metadata["signal_share"])
    )
    write_csv(ex.path("sample_bands.csv"), header, rows)
    plotting.plot_bands(traj.steps, traj.metadata["signal_share"], ex.path("sample_bands.png"),
                        "denoised signal energy / final energy", "reverse: per-band signal emergence")

    summary = {"n_samples": len(x), "terminal_deviation": ex.schedule.terminal_deviation()}
    data = ex.data
    if not np.any(data.var) and len(data) <= 64:
        comp = data.component_of(x)
        means = data.means[comp]
        axes = ex.op.field_axes
        rel = np.sqrt(np.sum((x - means) ** 2, axis=axes) / np.maximum(np.sum(means**2, axis=axes), 1e-24))
        summary["assignment_rate"] = float(np.mean(rel < 0.1))
        for m in range(len(data)):
            summary[f"component{m}_fraction"] = float(np.mean(comp == m))
    _write_metrics(ex.path("sample_summary.csv"), summary)
    return EXIT_OK


def cmd_eval(ex: Experiment, samples, reference=None, checkpoint=None, max_frechet=None,
             max_cov_err=None, max_loss_ratio=None) -> int:
    cfg = ex.cfg
    op = ex.op
    x = load_fields(samples, cfg.image_size)
    ref = load_fields(reference, cfg.image_size) if reference else ex.data.draw(ex.rng(6), cfg.n_reference)
    for name, arr in (("samples", x), ("reference", ref)):
        if arr.shape[1:] != op.field_shape:
            raise InvalidInput(f"{name} have shape {arr.shape[1:]}, expected {op.field_shape}")
        if len(arr) < 2:
            raise InvalidInput(f"need at least 2 {name}, got {len(arr)}")
    metrics = {
        "n_samples": len(x),
        "n_reference": len(ref),
        "gaussian_frechet_pixel": frechet_distance(fit_gaussian(x), fit_gaussian(ref)),
        "gaussian_frechet_spectral": frechet_distance(fit_gaussian(op.to_spectral(x)),
                                                      fit_gaussian(op.to_spectral(ref))),
        "mean_err": mean_error(x, ref),
        "cov_rel_err": cov_relative_error(x, ref),
    }
    ex_bands = band_energy(op, x, cfg.n_bands).mean(axis=0)
    ref_bands = band_energy(op, ref, cfg.n_bands).mean(axis=0)
    for b in range(cfg.n_bands):
        metrics[f"sample_energy_band{b}"] = ex_bands[b]
        metrics[f"reference_energy_band{b}"] = ref_bands[b]
    if checkpoint or cfg.model == "oracle":
        model = ex.load_model(checkpoint)
        batch = make_batch(ex.schedule, ex.data, cfg.eval_batch, ex.rng(4))
        model_loss, oracle_loss, _ = _loss_table(ex, model, batch)
        metrics.update(model_loss=model_loss, oracle_loss=oracle_loss, loss_ratio=model_loss / oracle_loss)

    failed = []
    for key, limit in (("gaussian_frechet_pixel", max_frechet), ("cov_rel_err", max_cov_err),
                       ("loss_ratio", max_loss_ratio)):
        if limit is not None and key in metrics and not metrics[key] <= limit:
            failed.append(f"{key}={metrics[key]:.6g} > {limit:g}")
    metrics["within_thresholds"] = not failed
    _write_metrics(ex.path("eval.csv"), metrics)
    plotting.plot_band_comparison(["samples", "reference"], [ex_bands, ref_bands], ex.path("eval_bands.png"))
    if failed:
        log.error("threshold exceeded: %s", "; ".join(failed))
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_check(ex: Experiment, tol: float = 1e-9) -> int:
    s = ex.schedule
    rng = ex.rng(7)
    rows = discretization_contract_check(s, rng)
    op = s.operator
    for row in rows:
        x = rng.standard_normal((8,) + op.field_shape)
        z = rng.standard_normal(x.shape)
        blur = markov_step_blur(s, x, row["i"], z=z)
        rot = op.to_pixel(markov_step_generalized(s, op.to_spectral(x), row["i"], zbar=op.to_spectral(z)))
        row["prop1_dev"] = float(np.max(np.abs(blur - rot)))
    header = ["i", "forward_dev", "reverse_dev", "prop1_dev", "literal_index_gap", "vp_forward_dev", "vp_reverse_dev"]
    write_csv(ex.path("check.csv"), header, ([r[k] for k in header] for r in rows))

    steps = np.arange(1, s.n_steps + 1)
    a = s.diag_A(steps)
    explicit = np.cumprod(a, axis=0)
    worst = {
        "max_forward_dev": max(r["forward_dev"] for r in rows),
        "max_reverse_dev": max(r["reverse_dev"] for r in rows),
        "max_prop1_dev": max(r["prop1_dev"] for r in rows),
        "max_marginal_dev": float(np.max(np.abs(explicit - s.diag_Abar(steps)))),
        "max_variance_dev": float(np.max(np.abs(a + s.diag_B(steps) - 1.0))),
    }
    summary = dict(worst)
    summary["terminal_deviation"] = s.terminal_deviation()
    summary["max_literal_index_gap"] = max(r["literal_index_gap"] for r in rows)
    ok = all(v <= tol for v in worst.values())
    summary["passed"] = ok
    _write_metrics(ex.path("check_summary.csv"), summary)
    if not ok:
        log.error("discretization check failed: %s", worst)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides out_dir)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="c2f", description="Coarse-to-fine blur diffusion experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("schedule", parents=[common], help="emit blur/noise schedule tables and plot")
    p = sub.add_parser("forward", parents=[common], help="forward blurring trajectory of one image")
    p.add_argument("--image", help="PGM/PNG input; defaults to a dataset draw")
    p = sub.add_parser("train", parents=[common], help="fit a linear or MLP noise predictor")
    p.add_argument("--resume", help="checkpoint to start from (fingerprint must match)")
    p = sub.add_parser("sample", parents=[common], help="reverse deblurring sampler")
    p.add_argument("--checkpoint", help="trained model (default: OUT/checkpoint.c2f)")
    p = sub.add_parser("eval", parents=[common], help="compare samples with reference data")
    p.add_argument("--samples", required=True, help="directory with samples.csv or images, or a CSV file")
    p.add_argument("--reference", help="reference samples (default: fresh dataset draws)")
    p.add_argument("--checkpoint", help="also report held-out loss of this model")
    p.add_argument("--max-frechet", type=float)
    p.add_argument("--max-cov-err", type=float)
    p.add_argument("--max-loss-ratio", type=float)
    p = sub.add_parser("check", parents=[common], help="verify discretization and equivalence identities")
    p.add_argument("--tol", type=float, default=1e-9)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_overrides(args.set)
    extra = {}
    if args.seed is not None:
        extra["seed"] = str(args.seed)
    if args.out is not None:
        extra["out_dir"] = args.out
    return cfg.with_overrides(extra)


def _thread_limit():
    n = os.environ.get("C2F_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def run(args) -> int:
    cfg = resolve_config(args)
    ex = Experiment(cfg)
    cfg.save(ex.path("config.txt"))
    if args.command == "schedule":
        return cmd_schedule(ex)
    if args.command == "forward":
        return cmd_forward(ex, args.image)
    if args.command == "train":
        return cmd_train(ex, args.resume)
    if args.command == "sample":
        return cmd_sample(ex, args.checkpoint)
    if args.command == "eval":
        return cmd_eval(ex, args.samples, args.reference, args.checkpoint, args.max_frechet,
                        args.max_cov_err, args.max_loss_ratio)
    return cmd_check(ex, args.tol)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return run(args)
    except (InvalidParameter, InvalidInput, InvalidState, OSError) as exc:
        print(f"c2f {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
