"""Experiment configuration, training runs, sweeps and report output.

A config file is flat ``key = value`` text; ``#`` starts a comment. A
``preset`` key loads one of :data:`PRESETS` first, then the remaining keys
override it. Every key mirrors a field of :class:`ExperimentConfig`.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import datasets as ds
from . import network as nw
from . import optim
from . import physics as ph
from . import simulate as sm
from .simulate import ConfigError

SYSTEMS = ("pendulum-ideal", "pendulum-csv", "heat-synthetic", "heat-csv")
MODELS = ("pinn", "nn")
SAMPLINGS = ("linspace", "uniform", "adjacent", "strided")
TEST_SPLITS = ("full", "complement")
OPTIMIZERS = ("lbfgs", "adam")
SWEEP_AXES = {"n_data": int, "frame_size": int, "noise_sigma": float, "domain_proportion": float}


@dataclass
class ExperimentConfig:
    system: str = "pendulum-ideal"
    model: str = "pinn"
    data_path: str = ""

    hidden: tuple = (5, 5, 5)
    activation: str = "sine"
    normalize: bool = False

    sampling: str = "linspace"
    n_data: int = 100
    fraction: float = 0.0  # adjacent only; used instead of n_data when > 0
    sampling_unit: str = "frames"  # heat only: frames or points
    domain_proportion: float = 1.0
    test_split: str = "full"
    train_stride: int = 7
    test_stride: int = 23
    stride_offset: int = 0
    n_colloc: int = 100
    colloc: str = "linspace"
    noise_sigma: float = 0.0

    lambda_p: float = 0.001

    optimizer: str = "lbfgs"
    lr: float = 0.01
    history_size: int = 100
    tol_grad: float = 1e-7
    tol_change: float = 1e-9
    max_iters: int = 2000
    batch_size: int = 0  # adam only; 0 means full batch

    seed_init: int = 0
    seed_sampling: int = 0
    seed_noise: int = 0

    g: float = 9.8
    L: float = 0.325
    b: float = 0.001
    b_trainable: bool = False
    b_init: float = 0.0
    n_points: int = 1500
    t_end: float = 6.0
    phi0: float = -math.pi / 2
    omega0: float = 0.0
    b_sim: float = 0.001
    remove_offset: bool = False

    alpha: float = 10.0
    beta: float = 10.0
    coef_trainable: bool = False
    heat_nx: int = 8
    heat_ny: int = 8
    heat_dt: float = 0.0125
    heat_steps: int = 160
    heat_save_every: int = 4
    alpha_true: float = 10.0
    beta_true: float = 10.0
    heat_source: str = ""  # "row,col,power"
    frame_size: int = 0

    denoise: bool = False
    spike_threshold: float = 100.0
    savgol_window: int = 401
    savgol_order: int = 3

    @property
    def is_heat(self):
        return self.system.startswith("heat")

    @property
    def effective_lambda(self):
        return 0.0 if self.model == "nn" else self.lambda_p

    def validate(self):
        def choice(name, options):
            if getattr(self, name) not in options:
                raise ConfigError(f"{name} must be one of {options}, got {getattr(self, name)!r}")

        choice("system", SYSTEMS)
        choice("model", MODELS)
        choice("sampling", SAMPLINGS)
        choice("test_split", TEST_SPLITS)
        choice("optimizer", OPTIMIZERS)
        choice("colloc", ("linspace", "uniform"))
        choice("sampling_unit", ("frames", "points"))
        choice("activation", nw.ACTIVATIONS)
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden must list at least one positive width")
        if self.system.endswith("csv"):
            if not self.data_path:
                raise ConfigError(f"system {self.system} needs data_path")
            if not Path(self.data_path).is_file():
                raise ConfigError(f"data_path {self.data_path!r} does not exist")
        if not 0 < self.domain_proportion <= 1:
            raise ConfigError("domain_proportion must lie in (0, 1]")
        if self.n_data < 1 or self.n_colloc < 0 or self.max_iters < 0:
            raise ConfigError("n_data >= 1, n_colloc >= 0 and max_iters >= 0 required")
        if self.lr <= 0 or self.history_size < 1:
            raise ConfigError("lr > 0 and history_size >= 1 required")
        if self.tol_grad < 0 or self.tol_change < 0 or self.noise_sigma < 0 or self.lambda_p < 0:
            raise ConfigError("tolerances, noise_sigma and lambda_p must be >= 0")
        if self.frame_size < 0 or self.batch_size < 0:
            raise ConfigError("frame_size and batch_size must be >= 0")
        if self.savgol_window <= self.savgol_order or self.savgol_order < 0:
            raise ConfigError("savgol_window must exceed savgol_order >= 0")
        if self.heat_source:
            _parse_source(self.heat_source)
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def _parse_source(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"heat_source must be 'row,col,power', got {text!r}")
    try:
        return int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise ConfigError(f"heat_source must be 'row,col,power', got {text!r}") from None


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, raw):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    if not isinstance(raw, str):
        return tuple(int(h) for h in raw) if kind == "tuple" else raw
    text = raw.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple":
            return tuple(int(h) for h in text.replace(" ", "").split(",") if h)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


PRESETS = {
    "ideal-abundant": dict(
        hidden=(32, 32, 32), n_data=150, n_colloc=100, lambda_p=0.001, lr=0.01, max_iters=2000
    ),
    "ideal-linspace": dict(sampling="linspace", n_data=5),
    "ideal-uniform": dict(sampling="uniform", n_data=10),
    "ideal-adjacent": dict(sampling="adjacent", n_data=100),
    "ideal-noisy": dict(sampling="linspace", n_data=100, noise_sigma=0.5),
    "real-pendulum-domain": dict(
        system="pendulum-csv",
        hidden=(32, 32, 32),
        sampling="strided",
        remove_offset=True,
        n_colloc=8000,
        lambda_p=0.1,
        lr=0.05,
        b_trainable=True,
        tol_grad=0.0,
        tol_change=0.0,
        max_iters=2000,
    ),
    "heat-inverse": dict(
        system="heat-synthetic",
        hidden=(64, 32),
        activation="tanh",
        normalize=True,
        n_data=41,
        n_colloc=2000,
        colloc="uniform",
        lambda_p=0.5,
        lr=0.01,
        coef_trainable=True,
        max_iters=3000,
    ),
    "heat-frame-sweep": dict(
        system="heat-synthetic",
        hidden=(64, 32),
        activation="tanh",
        normalize=True,
        heat_nx=16,
        heat_ny=16,
        frame_size=8,
        n_data=41,
        n_colloc=2000,
        colloc="uniform",
        lambda_p=0.5,
        coef_trainable=True,
    ),
    "heat-linspace-frames": dict(
        system="heat-synthetic",
        hidden=(64, 32),
        activation="tanh",
        normalize=True,
        n_data=11,
        test_split="complement",
        n_colloc=2000,
        colloc="uniform",
        lambda_p=0.5,
        coef_trainable=True,
    ),
    "heat-uniform-points": dict(
        system="heat-synthetic",
        hidden=(64, 32),
        activation="tanh",
        normalize=True,
        sampling="uniform",
        sampling_unit="points",
        n_data=384,
        test_split="complement",
        n_colloc=2000,
        colloc="uniform",
        lambda_p=0.5,
        coef_trainable=True,
    ),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    values = {**PRESETS[name], **overrides}
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()}).validate()


def parse_config_text(text, overrides=None):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key] = value
    values.update(overrides or {})
    name = values.pop("preset", None)
    if name is not None and name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = dict(PRESETS.get(name, {}))
    base.update(values)
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in base.items()}).validate()


def load_config(path, overrides=None):
    return parse_config_text(Path(path).read_text(), overrides)


def dump_config(config):
    lines = []
    for k, v in config.to_dict().items():
        if isinstance(v, list):
            v = ",".join(map(str, v))
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# -- data preparation ---------------------------------------------------------------


def rmse(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size == 0 or pred.shape != truth.shape:
        raise ValueError("rmse needs equal, nonempty inputs")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass
class Prepared:
    source: object
    data: ds.TrainingSet
    physics: object
    input_names: tuple
    notes: list


def load_source(config):
    """Reference series or frame stack for ``config.system``, with notes."""
    notes = []
    if config.system == "pendulum-ideal":
        try:
            sim = sm.PendulumSimConfig(
                config.n_points, config.t_end, config.phi0, config.omega0,
                config.g, config.L, config.b_sim,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return sm.euler_cromer(sim), notes
    if config.system == "pendulum-csv":
        series = ds.load_pendulum_csv(config.data_path)
        if config.remove_offset:
            series = ds.remove_offset(series)
        return series, notes
    if config.system == "heat-synthetic":
        hc = sm.HeatSimConfig(
            config.heat_nx, config.heat_ny, 1.0, 1.0, config.heat_dt, config.heat_steps,
            config.alpha_true, config.beta_true,
            _parse_source(config.heat_source) if config.heat_source else None,
            config.heat_save_every,
        )
        stack = sm.fd_heat_solve(hc)
    else:
        stack = ds.load_frames_csv(config.data_path)
    if config.denoise:
        window = ds.odd_window(config.savgol_window)
        if window != config.savgol_window:
            notes.append(f"savgol window {config.savgol_window} adjusted to odd {window}")
        stack, rep = ds.denoise(
            stack, ds.DenoiseConfig(config.spike_threshold, window, config.savgol_order),
            config.savgol_window,
        )
        notes.append(
            f"denoise dropped {rep.dropped_frames} frames ({rep.dropped_fraction:.4%}); "
            f"{rep.stuck_pixels} pixels never updated their anchor"
        )
    if config.frame_size:
        try:
            stack = ds.reduce_frame(stack, config.frame_size)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return stack, notes


def prepare(config):
    config.validate()
    source, notes = load_source(config)
    heat = isinstance(source, ds.FrameStack)
    unit = config.sampling_unit if heat else "samples"
    n_units = source.frames.size if unit == "points" else len(source)
    n_dom = max(1, int(math.floor(config.domain_proportion * n_units + 1e-9)))
    n_colloc = config.n_colloc if config.effective_lambda > 0 else 0
    common = dict(unit=unit, n_colloc=n_colloc, colloc=config.colloc, colloc_seed=config.seed_sampling)
    extra = {"domain_units": n_dom, "seed": config.seed_sampling}
    try:
        if config.sampling == "strided":
            train, test = ds.strided_split(n_dom, config.train_stride, config.test_stride, config.stride_offset)
            extra.update(train_stride=config.train_stride, test_stride=config.test_stride)
            data = ds.build_training_set(
                source, train, strategy="strided", test="given", test_units=test, extra=extra, **common
            )
        else:
            if config.sampling == "linspace":
                idx = ds.linspace_indices(n_dom, config.n_data)
            elif config.sampling == "uniform":
                idx = ds.uniform_indices(n_dom, config.n_data, config.seed_sampling)
            elif config.fraction > 0:
                idx = ds.adjacent_indices(n_dom, fraction=config.fraction)
            else:
                idx = ds.adjacent_indices(n_dom, n=config.n_data)
            data = ds.build_training_set(
                source, idx, strategy=config.sampling, test=config.test_split, extra=extra, **common
            )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(data.test_y) == 0:
        raise ConfigError("test split is empty")
    if config.noise_sigma > 0:
        data.train_y = ds.add_gaussian_noise(data.train_y, config.noise_sigma, config.seed_noise)
        data.provenance["noise_sigma"] = config.noise_sigma
    if heat:
        physics = ph.HeatParams(config.alpha, config.beta, config.coef_trainable)
        names = ("time_s", "x", "y")
    else:
        b = config.b_init if config.b_trainable else config.b
        physics = ph.PendulumParams(config.g, config.L, b, config.b_trainable)
        names = ("time_s",)
    return Prepared(source, data, physics, names, notes)


def build_network(config, prepared):
    spec = nw.MlpSpec(len(prepared.input_names), config.hidden, 1, config.activation)
    net = nw.init(spec, config.seed_init)
    if config.normalize:
        x_all = np.concatenate([prepared.data.train_x, prepared.data.test_x])
        nw.fit_scaling(net, x_all, prepared.data.train_y)
    return net


class BatchedObjective:
    """Loss on a fresh random mini-batch of data and collocation points per call."""

    def __init__(self, objective, batch_size, seed):
        self.obj = objective
        self.batch = batch_size
        self.rng = np.random.default_rng(seed)

    def _pick(self, n):
        return self.rng.choice(n, size=self.batch, replace=False) if n > self.batch else slice(None)

    def __call__(self, flat):
        o = self.obj
        di = self._pick(len(o.data_y))
        colloc = None
        if o.colloc_x is not None:
            colloc = o.colloc_x[self._pick(len(o.colloc_x))]
        sub = ph.PinnObjective(o.net, o.physics, o.data_x[di], o.data_y[di], colloc, o.lambda_p)
        return sub(flat)


# -- reports ----------------------------------------------------------------------


@dataclass
class TrainReport:
    config: dict
    losses: list
    rmses: list
    coefficients: dict
    initial_rmse: float
    final_rmse: float
    best_rmse: float
    best_iteration: int
    stop_reason: str
    iterations: int
    last_valid_iteration: int
    final_coefficients: dict
    provenance: dict
    data_range: float
    notes: list
    wall_time: float = 0.0
    predictions: dict = field(default=None, repr=False)
    params: np.ndarray = field(default=None, repr=False)

    def payload(self):
        """Everything that must be reproducible: no wall time, no raw arrays."""
        skip = {"wall_time", "predictions", "params"}
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}

    def to_json(self, wall_time=True):
        d = self.payload()
        if wall_time:
            d["wall_time"] = self.wall_time
        return json.dumps(d, indent=2, sort_keys=True)


def run_experiment(config, out_dir=None, figures=True):
    """Train one model as described by ``config`` and return its report.

    With ``out_dir`` the report, plot-data CSVs, checkpoint and figures are
    written there.
    """
    t0 = time.perf_counter()
    prep = prepare(config)
    data = prep.data
    net = build_network(config, prep)
    colloc = data.colloc_x if config.effective_lambda > 0 else None
    obj = ph.PinnObjective(net, prep.physics, data.train_x, data.train_y, colloc, config.effective_lambda)
    if config.optimizer == "lbfgs":
        opt = optim.Lbfgs(config.lr, config.history_size, config.tol_grad, config.tol_change)
        evaluator = obj
    else:
        opt = optim.Adam(config.lr)
        evaluator = BatchedObjective(obj, config.batch_size, config.seed_sampling) if config.batch_size else obj

    def monitor(flat):
        return rmse(obj.predict(flat, data.test_x), data.test_y)

    start = obj.initial()
    coef_hist = {k: [] for k in obj.coefficients(start)}

    def callback(it, loss, err, flat):
        for k, v in obj.coefficients(flat).items():
            coef_hist[k].append(v)

    term = optim.TerminationConfig(config.tol_grad, config.tol_change, config.max_iters)
    result = optim.minimize(term, opt, evaluator, start, callback, monitor)

    with np.errstate(over="ignore", invalid="ignore"):
        initial = monitor(start)
        final = monitor(result.params)
        pred = obj.predict(result.params, data.test_x)
    if result.rmses:
        best_it = int(np.argmin(result.rmses)) + 1
        best = float(result.rmses[best_it - 1])
    else:
        best_it, best = 0, initial
    notes = list(prep.notes)
    if config.model == "nn" and config.lambda_p != 0:
        notes.append("model nn forces lambda_p = 0")
    if result.stop_reason == "blow-up":
        notes.append(f"blow-up after iteration {result.iterations}")
    report = TrainReport(
        config=config.to_dict(),
        losses=result.losses,
        rmses=result.rmses,
        coefficients=coef_hist,
        initial_rmse=initial,
        final_rmse=final,
        best_rmse=best,
        best_iteration=best_it,
        stop_reason=result.stop_reason,
        iterations=result.iterations,
        last_valid_iteration=result.last_valid_iteration,
        final_coefficients=obj.coefficients(result.params),
        provenance=_plain(data.provenance),
        data_range=float(np.ptp(data.test_y)),
        notes=notes,
        predictions={
            "names": prep.input_names,
            "x": data.test_x,
            "prediction": pred,
            "truth": data.test_y,
            "train_x": data.train_x,
            "train_y": data.train_y,
        },
        params=result.params,
    )
    report.wall_time = time.perf_counter() - t0
    if out_dir is not None:
        write_outputs(report, out_dir, figures=figures, net=net.with_params(result.params[: obj.n_net]))
    return report


def _plain(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def _f(x):
    return format(float(x), ".17g")


def emit_plotdata(report, out_dir):
    """Write ``loss_curve.csv`` and ``predictions.csv``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(report.coefficients)
    curve = out / "loss_curve.csv"
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "train_loss", "test_rmse", *names])
        for i, (loss, err) in enumerate(zip(report.losses, report.rmses)):
            w.writerow([i + 1, _f(loss), _f(err), *(_f(report.coefficients[k][i]) for k in names)])
    preds = out / "predictions.csv"
    p = report.predictions
    with open(preds, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*p["names"], "prediction", "truth"])
        for x, yp, yt in zip(p["x"], p["prediction"], p["truth"]):
            w.writerow([*(_f(v) for v in x), _f(yp), _f(yt)])
    return [curve, preds]


def write_outputs(report, out_dir, figures=True, net=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json"]
    paths[0].write_text(report.to_json() + "\n")
    paths += emit_plotdata(report, out)
    if net is not None:
        nw.save_checkpoint(net, out / "model.txt")
        paths.append(out / "model.txt")
    if figures:
        from . import plots

        paths += plots.report_figures(report, out)
    return paths


# -- sweeps -------------------------------------------------------------------------


def sweep_configs(config, axis, values, repeats):
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    if not values:
        raise ConfigError("sweep axis needs at least one value")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    cells = []
    for v in values:
        for r in range(repeats):
            cfg = replace(
                config,
                **{axis: SWEEP_AXES[axis](v)},
                seed_init=config.seed_init + r,
                seed_sampling=config.seed_sampling + r,
                seed_noise=config.seed_noise + r,
            )
            cells.append((SWEEP_AXES[axis](v), r, cfg.validate()))
    return cells


def _run_quiet(config):
    rep = run_experiment(config)
    rep.predictions = None
    rep.params = None
    return rep


@dataclass
class SweepResult:
    axis: str
    values: list
    repeats: int
    cells: list  # [(value, repeat, TrainReport), ...]

    def table(self):
        rows = []
        for v in self.values:
            reps = [r for val, _, r in self.cells if val == v]
            row = {
                self.axis: v,
                "runs": len(reps),
                "median_final_rmse": float(np.median([r.final_rmse for r in reps])),
                "median_best_rmse": float(np.median([r.best_rmse for r in reps])),
                "median_iterations": float(np.median([r.iterations for r in reps])),
                "blow_ups": sum(r.stop_reason == "blow-up" for r in reps),
            }
            for k in reps[0].final_coefficients:
                row[f"median_{k}"] = float(np.median([r.final_coefficients[k] for r in reps]))
            rows.append(row)
        return rows

    def payload(self):
        return {
            "axis": self.axis,
            "values": self.values,
            "repeats": self.repeats,
            "table": self.table(),
            "cells": [
                {"value": v, "repeat": r, "report": rep.payload()} for v, r, rep in self.cells
            ],
        }


def run_sweep(config, axis, values, repeats=5, workers=1, out_dir=None, figures=True):
    """One run per (axis value, repeat); seeds are offset by the repeat index.

    Cells are independent, so ``workers > 1`` runs them in a process pool
    and yields the same table.
    """
    cells = sweep_configs(config, axis, values, repeats)
    cfgs = [c for _, _, c in cells]
    if workers > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(_run_quiet, cfgs))
    else:
        reports = [_run_quiet(c) for c in cfgs]
    values = [SWEEP_AXES[axis](v) for v in values]
    result = SweepResult(axis, values, repeats, [(v, r, rep) for (v, r, _), rep in zip(cells, reports)])
    if out_dir is not None:
        write_sweep(result, out_dir, figures)
    return result


def write_sweep(result, out_dir, figures=True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(result.payload(), indent=2, sort_keys=True) + "\n")
    rows = result.table()
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    paths = [out / "sweep.json", out / "sweep.csv"]
    if figures:
        from . import plots

        paths.append(plots.sweep_figure(result, out / "sweep.png"))
    return paths
