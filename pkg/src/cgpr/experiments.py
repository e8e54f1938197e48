"""
Experiment drivers: sampled-GP recovery (``exp1``) and channel equalization.

Every random stream is derived from ``(master seed, index)`` through
`numpy.random.SeedSequence`, so results do not depend on execution order.
"""

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gpr, linalg
from .channel import ChannelConfig, channel_output, equalizer_pairs, noise_variance, source_signal
from .errors import ConfigError, NotPositiveDefinite
from .hyperlearn import LOG_POSITIVE, REAL, HyperParameter, HyperSpec, OptimizeOptions, median_sqdist, maximize
from .kaf import baseline_settings, run_filter
from .kernels import Kernel, KernelKind, KernelParams

log = logging.getLogger(__name__)

KLMS_ALGORITHMS = ("NCKLMS2", "NCKLMS2-i", "NCKLMS2-G", "ACKLMS")
GPR_ALGORITHMS = ("CGPR", "opt-CGPR")
ALGORITHMS = KLMS_ALGORITHMS + GPR_ALGORITHMS
MSE_CLAMP_DB = 60.0


def _rng(seed, *index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, index)]))


def _derived_seed(seed, *index):
    return int(np.random.SeedSequence([int(seed), *map(int, index)]).generate_state(1)[0])


def mse_db(a, b):
    return float(10 * np.log10(np.mean(np.abs(np.asarray(a) - np.asarray(b)) ** 2)))


# ---------------------------------------------------------------------------
# Experiment 1: learn a sampled proper GP with non-null cross-covariance
# ---------------------------------------------------------------------------


@dataclass
class Exp1Config:
    gamma: float = 1.125
    mu: complex = 2 + 2j
    v_r: float = 1.0
    v_rj: float = 1.0
    noise_std: float = 0.1
    n_train: int = 200
    grid_points: int = 80
    grid_low: float = -6.0
    grid_high: float = 5.0
    seeds: list = field(default_factory=lambda: list(range(10)))
    learn: list = field(default_factory=lambda: ["gamma", "mu_re_0", "mu_im_0", "noise_var"])
    slices_im: list = field(default_factory=lambda: [4.4430, -0.5696])
    posterior_samples: int = 4
    min_noise_var: float = 1e-10
    optimizer: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "mu" in data and isinstance(data["mu"], (list, tuple)):
            data["mu"] = complex(*data["mu"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        out = asdict(self)
        out["mu"] = [self.mu.real, self.mu.imag]
        out["optimizer"] = asdict(OptimizeOptions(**self.optimizer))
        return out

    @property
    def true_params(self):
        return KernelParams(gamma=self.gamma, mu=(complex(self.mu),), v_r=self.v_r, v_rj=self.v_rj)

    def grid(self):
        g = np.linspace(self.grid_low, self.grid_high, self.grid_points)
        re, im = np.meshgrid(g, g)
        return g, (re + 1j * im).ravel()


def _learn_spec(names):
    return HyperSpec(tuple(HyperParameter(n, LOG_POSITIVE if n in ("gamma", "amplitude", "noise_var") else REAL) for n in names))


def run_exp1_seed(config, seed):
    """One realization: sample, learn, predict on the grid.

    Returns a JSON-ready dict with MSE (dB), learned hyperparameters and
    slice data for plotting.
    """
    g, grid = config.grid()
    true_kernel = Kernel(KernelKind.CONVOLUTION_PROPER, config.true_params)
    f = gpr.sample_prior(true_kernel, grid, 1, np.random.SeedSequence([seed, 0]))[0]
    rng = _rng(seed, 1)
    idx = np.sort(rng.choice(grid.size, config.n_train, replace=False))
    noise = config.noise_std * (rng.standard_normal(idx.size) + 1j * rng.standard_normal(idx.size)) / np.sqrt(2)
    data = gpr.ComplexDataset(grid[idx], f[idx] + noise)

    learned = {}
    if config.learn:
        spec = _learn_spec(config.learn)
        # neutral start: mu at the origin, gamma at 1, noise at a tenth of the output power
        start = KernelParams(gamma=1.0, mu=(0j,), v_r=config.v_r, v_rj=config.v_rj)
        if "v_r" in config.learn or "v_rj" in config.learn:
            start = KernelParams(gamma=1.0, mu=(0j,), v_r=1.0, v_rj=0.5)
        options = OptimizeOptions(**{"seed": seed, **config.optimizer})
        params, noise_var, report = maximize(data, KernelKind.CONVOLUTION_PROPER, spec, options, base_params=start)
        learned = report.to_dict()
        learned["sigma"] = float(np.sqrt(noise_var))
    else:
        params = config.true_params
        noise_var = max(config.noise_std**2, config.min_noise_var)
    model = gpr.fit(data, Kernel(KernelKind.CONVOLUTION_PROPER, params), noise_var)
    post = gpr.predict(model, grid, full_cov=False)

    slices = []
    for k, im_value in enumerate(config.slices_im):
        row = int(np.argmin(np.abs(g - im_value)))
        cols = slice(row * g.size, (row + 1) * g.size)
        on_row = idx[(idx >= cols.start) & (idx < cols.stop)]
        draws = gpr.sample_posterior(model, grid[cols], config.posterior_samples, np.random.SeedSequence([seed, 2, k]))
        slices.append(
            {
                "im_x": float(g[row]),
                "re_x": g.tolist(),
                "truth_re": f[cols].real.tolist(),
                "truth_im": f[cols].imag.tolist(),
                "mean_re": post.mean[cols].real.tolist(),
                "mean_im": post.mean[cols].imag.tolist(),
                "std": np.sqrt(np.maximum(post.variance[cols], 0)).tolist(),
                "train_re_x": grid[on_row].real.tolist(),
                "train_y_re": data.outputs[np.searchsorted(idx, on_row)].real.tolist(),
                "train_y_im": data.outputs[np.searchsorted(idx, on_row)].imag.tolist(),
                "posterior_re": draws.real.tolist(),
                "posterior_im": draws.imag.tolist(),
            }
        )
    train_pred = gpr.predict(model, data.inputs, full_cov=False).mean
    return {
        "seed": int(seed),
        "mse_db": mse_db(post.mean, f),
        "train_mse_db": mse_db(train_pred, f[idx]),
        "learned": learned,
        "slices": slices,
    }


def run_experiment_1(config=None):
    """Run all seeds of the sampled-GP experiment; summary carries medians."""
    config = config or Exp1Config()
    runs = []
    for seed in config.seeds:
        t0 = time.perf_counter()
        try:
            result = run_exp1_seed(config, seed)
        except (NotPositiveDefinite, FloatingPointError) as exc:
            exc.args = (f"seed {seed}: {exc}",) + exc.args[1:]
            raise
        result["wall_time"] = time.perf_counter() - t0
        log.info("exp1 seed %d: %.2f dB", seed, result["mse_db"])
        runs.append(result)
    summary = {"median_mse_db": float(np.median([r["mse_db"] for r in runs]))}
    if config.learn and runs:
        for key in ("gamma", "sigma"):
            summary[f"median_{key}"] = float(np.median([r["learned"][key] for r in runs]))
        if "mu_re_0" in config.learn:
            summary["median_mu_re"] = float(np.median([r["learned"]["mu_re"][0] for r in runs]))
            summary["median_mu_im"] = float(np.median([r["learned"]["mu_im"][0] for r in runs]))
    return {"experiment": "exp1", "config": config.to_dict(), "runs": runs, "summary": summary}


# ---------------------------------------------------------------------------
# Channel equalization benchmark
# ---------------------------------------------------------------------------


@dataclass
class EqualizationConfig:
    name: str = "soft-circular"
    channel: dict = field(default_factory=lambda: ChannelConfig.preset("soft", True).to_dict())
    nonlinearity: str = "soft"
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    samples: int = 3000
    trials: int = 100
    seed: int = 0
    window: int = 100
    cgpr_train: int = 250
    opt_samples: int = 1000
    opt_grid: int = 16
    train_cap: int = None
    optimizer: dict = field(default_factory=lambda: {"restarts": 4, "max_iter": 200})

    @classmethod
    def case(cls, name, **overrides):
        """Named benchmark case ``<soft|strong>-<circular|noncircular>``."""
        try:
            nonlinearity, circ = name.split("-", 1)
            circular = {"circular": True, "noncircular": False}[circ]
        except (ValueError, KeyError):
            raise ConfigError(f"unknown case {name!r}") from None
        channel = ChannelConfig.preset(nonlinearity, circular).to_dict()
        return cls(name=name, channel=channel, nonlinearity=nonlinearity, **overrides)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        base = cls.case(data.pop("name")) if "name" in data and "channel" not in data else cls()
        try:
            merged = {**asdict(base), **data}
            config = cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        config.validate()
        return config

    def validate(self):
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; expected a subset of {list(ALGORITHMS)}")
        ChannelConfig.from_dict(self.channel)
        if self.samples <= self.window:
            raise ConfigError("samples must exceed the averaging window")
        if self.nonlinearity not in ("soft", "strong"):
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")

    def to_dict(self):
        out = asdict(self)
        out["optimizer"] = asdict(OptimizeOptions(**self.optimizer))
        return out


@dataclass
class LearningCurve:
    """Trial-averaged, window-averaged MSE in dB for one algorithm."""

    label: str
    mse_db: np.ndarray
    trials: int
    window: int
    flagged_trials: list = field(default_factory=list)
    failed_trials: list = field(default_factory=list)


def windowed_mse(errors, window):
    """Mean of ``|e|^2`` over the ``window`` samples ending at each index >= window.

    Returns ``len(errors) - window`` values.
    """
    sq = np.abs(np.asarray(errors)) ** 2
    with np.errstate(invalid="ignore", over="ignore"):
        c = np.concatenate([[0.0], np.cumsum(sq)])
        out = (c[window + 1 :] - c[1 : len(sq) - window + 1]) / window
    # cumulative sums carry an inf/nan forward; recompute those windows directly
    bad = ~np.isfinite(out)
    if np.any(bad):
        for i in np.flatnonzero(bad):
            with np.errstate(invalid="ignore", over="ignore"):
                out[i] = np.mean(sq[i + 1 : i + 1 + window])
    return out


def _clamp(curve):
    limit = 10 ** (MSE_CLAMP_DB / 10)
    bad = ~np.isfinite(curve) | (curve > limit)
    return np.where(bad, limit, curve), bool(np.any(bad))


def _online_gpr(X, y, kernel, noise_var, cap=None):
    """Predict each target from all previous pairs; returns the a priori errors.

    With ``cap`` the training set stops growing after ``cap`` pairs and the
    remaining targets are predicted from that fixed model.
    """
    n = len(y) if cap is None else min(cap, len(y))
    pred, model = gpr.online_predictions(gpr.ComplexDataset(X[:n], y[:n]), kernel, noise_var)
    if n < len(y):
        pred = np.concatenate([pred, gpr.predict(model, X[n:], full_cov=False).mean])
    return y - pred


def loo_mse(model):
    """Leave-one-out prediction MSE of a fitted model.

    The residual of predicting ``y_i`` from the other samples is
    ``alpha_i / (C^{-1})_{ii}``.
    """
    Cinv_diag = np.diag(linalg.inverse(model.factor)).real
    return float(np.mean(np.abs(model.alpha / Cinv_diag) ** 2))


def tune_gamma_grid(X, y, noise_var, points=16):
    """Pick gamma on a log grid over [1e-2, 1e2] x median squared distance.

    Each candidate is scored by its leave-one-out prediction MSE on
    ``(X, y)`` with the noise variance held fixed.

    Returns
    -------
    gamma : float
    scores : list of (gamma, mse)
    """
    base = median_sqdist(X)
    data = gpr.ComplexDataset(X, y)
    scores = []
    for gamma in base * np.logspace(-2, 2, points):
        kernel = Kernel(KernelKind.COMPLEX_METRIC_GAUSSIAN, KernelParams(gamma=float(gamma)))
        try:
            err = loo_mse(gpr.fit(data, kernel, noise_var))
        except NotPositiveDefinite:
            err = np.inf
        scores.append((float(gamma), err))
    best = min(range(points), key=lambda i: (scores[i][1], i))
    return scores[best][0], scores


def run_equalization_trial(config, trial):
    """All requested algorithms on one random channel realization.

    Returns ``{algorithm: errors}``, a dict of per-algorithm details, and a
    dict of failures (algorithm -> message).
    """
    channel = ChannelConfig.from_dict(config.channel)
    rng = _rng(config.seed, trial, 0)
    total = config.samples + channel.filter_len - 1
    s = source_signal(channel, total, rng)
    q, r = channel_output(s, channel, rng)
    X, y = equalizer_pairs(s, r, channel.filter_len, channel.delay)
    errors, details, failures = {}, {}, {}
    for name in config.algorithms:
        t0 = time.perf_counter()
        try:
            if name in KLMS_ALGORITHMS:
                e, state = run_filter(baseline_settings(name, config.nonlinearity), X, y)
                details[name] = {"dictionary_size": state.size}
            elif name == "CGPR":
                n_hyper = min(config.cgpr_train, len(y))
                data = gpr.ComplexDataset(X[:n_hyper], y[:n_hyper])
                spec = HyperSpec((HyperParameter("gamma", LOG_POSITIVE), HyperParameter("noise_var", LOG_POSITIVE)))
                start = KernelParams(gamma=median_sqdist(data.inputs))
                options = OptimizeOptions(**{"seed": _derived_seed(config.seed, trial, 2), **config.optimizer})
                params, noise_var, report = maximize(data, KernelKind.COMPLEX_METRIC_GAUSSIAN, spec, options, base_params=start)
                e = _online_gpr(X, y, Kernel(KernelKind.COMPLEX_METRIC_GAUSSIAN, params), noise_var, config.train_cap)
                details[name] = {"gamma": params.gamma, "noise_var": noise_var, "converged": report.converged}
            else:
                sub_rng = _rng(config.seed, trial, 1)
                pick = np.sort(sub_rng.choice(len(y), min(config.opt_samples, len(y)), replace=False))
                noise_var = noise_variance(channel, q)
                gamma, _ = tune_gamma_grid(X[pick], y[pick], noise_var, config.opt_grid)
                kernel = Kernel(KernelKind.COMPLEX_METRIC_GAUSSIAN, KernelParams(gamma=gamma))
                e = _online_gpr(X, y, kernel, noise_var, config.train_cap)
                details[name] = {"gamma": gamma, "noise_var": noise_var}
        except (NotPositiveDefinite, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
            log.warning("trial %d %s failed: %s", trial, name, exc)
            continue
        details[name]["wall_time"] = time.perf_counter() - t0
        errors[name] = e
    return errors, details, failures


def run_equalization(config):
    """Learning curves for every requested algorithm, averaged over trials."""
    config.validate()
    sums = {a: None for a in config.algorithms}
    counts = {a: 0 for a in config.algorithms}
    flagged = {a: [] for a in config.algorithms}
    failed = {a: [] for a in config.algorithms}
    trials = []
    for trial in range(config.trials):
        t0 = time.perf_counter()
        errors, details, failures = run_equalization_trial(config, trial)
        trials.append({"trial": trial, "details": details, "failures": failures, "wall_time": time.perf_counter() - t0})
        for name in config.algorithms:
            if name not in errors:
                failed[name].append(trial)
                continue
            curve, bad = _clamp(windowed_mse(errors[name], config.window))
            if bad:
                flagged[name].append(trial)
            sums[name] = curve if sums[name] is None else sums[name] + curve
            counts[name] += 1
    curves = []
    for name in config.algorithms:
        if counts[name]:
            mse = 10 * np.log10(sums[name] / counts[name])
        else:
            mse = np.full(config.samples - config.window, np.nan)
        curves.append(LearningCurve(name, mse, counts[name], config.window, flagged[name], failed[name]))
    return {"experiment": "equalize", "name": config.name, "config": config.to_dict(), "curves": curves, "trials": trials}


def steady_state_db(curve, last=200):
    """Steady-state MSE: mean (linear) of the last ``last`` curve points, in dB."""
    tail = 10 ** (np.asarray(curve.mse_db)[-last:] / 10)
    return float(10 * np.log10(np.mean(tail)))


# ---------------------------------------------------------------------------
# Result emission
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, LearningCurve):
        return {
            "label": obj.label,
            "mse_db": [None if not np.isfinite(v) else float(v) for v in obj.mse_db],
            "trials": obj.trials,
            "window": obj.window,
            "flagged_trials": obj.flagged_trials,
            "failed_trials": obj.failed_trials,
        }
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _curve_columns(reports):
    columns = []
    for rep in reports:
        for curve in rep.get("curves", []):
            label = f"{rep['name']}/{curve.label}" if rep.get("name") else curve.label
            columns.append((label, np.asarray(curve.mse_db)))
    return columns


def emit_results(reports, path, fmt="csv", timings=None):
    """Write curves and a manifest into directory ``path``.

    ``curves.csv`` holds ``sample_index`` plus one ``<case>/<algorithm>``
    column per curve (``fmt="csv"``); ``curves.json`` holds the same data
    for ``fmt="json"``.  ``exp1.json`` holds sampled-GP reports.
    ``manifest.json`` echoes the resolved configurations and the learned
    hyperparameters; wall-clock times go to ``timings.json`` so that the
    other files are byte-for-byte reproducible.

    Returns the list of files written.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown format {fmt!r}")
    try:
        os.makedirs(path, exist_ok=True)
        written = []
        eq = [r for r in reports if r.get("experiment", "equalize") == "equalize"]
        ex1 = [r for r in reports if r.get("experiment") == "exp1"]
        columns = _curve_columns(eq)
        if fmt == "csv" and (eq or not ex1):
            out = os.path.join(path, "curves.csv")
            length = max((len(c) for _, c in columns), default=0)
            offset = eq[0]["config"]["window"] if eq else 0
            with open(out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["sample_index"] + [label for label, _ in columns])
                for i in range(length):
                    row = [i + offset]
                    for _, c in columns:
                        row.append(repr(float(c[i])) if i < len(c) else "")
                    writer.writerow(row)
            written.append(out)
        elif fmt == "json" and eq:
            out = os.path.join(path, "curves.json")
            with open(out, "w") as fh:
                json.dump(_jsonable({label: c for label, c in columns}), fh, indent=1, sort_keys=True)
            written.append(out)
        if ex1:
            out = os.path.join(path, "exp1.json")
            stripped = [{**r, "runs": [{k: v for k, v in run.items() if k != "wall_time"} for run in r["runs"]]} for r in ex1]
            with open(out, "w") as fh:
                json.dump(_jsonable(stripped), fh, indent=1, sort_keys=True)
            written.append(out)
            if fmt == "csv":
                out = os.path.join(path, "exp1_seeds.csv")
                with open(out, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["seed", "mse_db", "gamma", "mu_re", "mu_im", "sigma"])
                    for r in ex1:
                        for run in r["runs"]:
                            ln = run["learned"]
                            writer.writerow(
                                [run["seed"], repr(run["mse_db"])]
                                + ([repr(ln["gamma"]), repr(ln["mu_re"][0]), repr(ln["mu_im"][0]), repr(ln["sigma"])] if ln else ["", "", "", ""])
                            )
                written.append(out)
        manifest = {
            "reports": [
                {
                    "experiment": r.get("experiment"),
                    "name": r.get("name"),
                    "config": r.get("config"),
                    "summary": r.get("summary"),
                    "runs": [{"seed": run["seed"], "mse_db": run["mse_db"], "learned": run["learned"]} for run in r.get("runs", [])],
                    "trials": [{"trial": t["trial"], "details": {a: {k: v for k, v in d.items() if k != "wall_time"} for a, d in t["details"].items()}, "failures": t["failures"]} for t in r.get("trials", [])],
                    "curves": [{"label": c.label, "trials": c.trials, "flagged_trials": c.flagged_trials, "failed_trials": c.failed_trials} for c in r.get("curves", [])],
                }
                for r in reports
            ]
        }
        out = os.path.join(path, "manifest.json")
        with open(out, "w") as fh:
            json.dump(_jsonable(manifest), fh, indent=1, sort_keys=True)
        written.append(out)
        if timings is not None:
            out = os.path.join(path, "timings.json")
            with open(out, "w") as fh:
                json.dump(_jsonable(timings), fh, indent=1, sort_keys=True)
            written.append(out)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return written


def read_curves_csv(path):
    """Parse ``curves.csv`` back into ``(sample_index, {column: values})``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    index = np.array([int(r[0]) for r in rows], dtype=int)
    columns = {}
    for j, label in enumerate(header[1:], start=1):
        columns[label] = np.array([float(r[j]) if r[j] else np.nan for r in rows])
    return index, columns
