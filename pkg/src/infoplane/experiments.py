"""Experiment drivers: correlated Gaussians, IP training runs and bottleneck sweeps.

Each driver takes a :class:`RunConfig` and returns plain data; writing files
is left to the ``write_*`` helpers so the CLI and the tests share one path.
"""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (GaussianPairSpec, analytic_gaussian_mi, find_mnist_split, load_mnist_idx,
                   resolve_data_dir, sample_correlated_gaussians)
from .ip import (EstimatorError, IPRecorder, IPTrajectory, TRAJECTORY_SCHEMA_VERSION, dpi_report,
                 feasibility_report, fmt, input_information, knee_estimate, output_mi_monotone)
from .mi import WidthRule, mi_from_grams, rule_gram
from .nets import Architecture, DivergenceError, init_autoencoder, train

PROBE_STREAM = 0x9B0BE  # seed-sequence key for probe-batch sampling

# rule -> (gamma for most layers, per-layer overrides) used when gamma is not given
RULE_DEFAULT_GAMMA = {
    "new": (0.8, {}),
    "old": (5.0, {"Z": 25.0}),
    "silverman": (1.0, {}),
}

PRESETS = {
    "desk": {
        "train_size": 2000,
        "test_size": 1024,
        "epochs": 10,
        "cadence": 10,
        # Glorot's range for logistic units; the plain range starves X' of variance in 200 steps
        "init_gain": 4.0,
    },
    "full": {
        "train_size": 60000,
        "test_size": 10000,
        "epochs": 100,
        "cadence": 10,
    },
}


def default_rhos():
    return [round(r, 10) for r in np.linspace(-0.99, 0.99, 21).tolist()]


@dataclass
class RunConfig:
    preset: str = None
    data_dir: str = None
    out: str = "results"
    seed: int = 0
    workers: int = 1
    # estimator
    rule: str = "new"
    gamma: float = None
    gamma_overrides: dict = None
    alpha: float = 1.01
    eps: float = 1e-8
    # network and training
    encoder_widths: list = field(default_factory=lambda: [1000, 500, 250])
    K: int = 2
    Ks: list = field(default_factory=lambda: [2, 4, 8, 13, 16, 24, 32])
    init_gain: float = 1.0
    lr: float = 0.1
    momentum: float = 0.5
    batch_size: int = 100
    epochs: int = 100
    train_size: int = None
    test_size: int = None
    probe_batches: int = 10
    probe_size: int = 512
    cadence: int = 10
    smoothing_span: int = 500
    final_window: int = 5
    knee_threshold: float = 0.3
    dpi_tol: float = 0.1
    feasibility_slack: float = 0.5
    # correlated Gaussians
    rhos: list = field(default_factory=default_rhos)
    dims: list = field(default_factory=lambda: [10, 100, 1000])
    n_samples: int = 128
    runs: int = 50
    gamma_new: float = 2.0
    gamma_old: float = 2.0 * math.sqrt(10.0)
    nsweep_dim: int = 100
    nsweep_sizes: list = field(default_factory=lambda: [128, 256, 512])

    def __post_init__(self):
        positive = ["alpha", "eps", "lr", "batch_size", "probe_batches", "probe_size", "cadence",
                    "smoothing_span", "final_window", "n_samples", "runs", "gamma_new",
                    "gamma_old", "workers", "init_gain", "K"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.momentum < 0 or self.epochs < 0:
            raise ValueError("momentum and epochs must be non-negative")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.rule not in RULE_DEFAULT_GAMMA:
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if any(abs(r) >= 0.995 for r in self.rhos):
            raise ValueError("rho grid must stay inside |rho| < 0.995")

    @classmethod
    def build(cls, file_values=None, overrides=None):
        """Merge defaults < preset < config file < overrides (None values in overrides are skipped)."""
        file_values = dict(file_values or {})
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        known = {f.name for f in fields(cls)}
        unknown = (set(file_values) | set(overrides)) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        preset = overrides.get("preset", file_values.get("preset"))
        merged = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            merged.update(PRESETS[preset])
        merged.update(file_values)
        merged.update(overrides)
        return cls(**merged)

    @classmethod
    def from_file(cls, path, overrides=None):
        with open(path, encoding="utf-8") as fh:
            return cls.build(json.load(fh), overrides)

    def width_rule(self):
        gamma, overrides = RULE_DEFAULT_GAMMA[self.rule]
        if self.gamma is not None:
            gamma = self.gamma
            overrides = {}
        if self.gamma_overrides is not None:
            overrides = dict(self.gamma_overrides)
        return WidthRule(kind=self.rule, gamma=gamma, eps=self.eps), overrides

    def to_dict(self):
        return asdict(self)


# -- correlated Gaussians ---------------------------------------------------

def _gaussian_cell(args):
    d, n, rho_index, rho, run, seed, rules, alpha = args
    spec = GaussianPairSpec(d=d, rho=rho, n=n, seed=np.random.SeedSequence([seed, d, n, rho_index, run]))
    X, Y = sample_correlated_gaussians(spec)
    out = []
    for rule in rules:
        try:
            A, _ = rule_gram(X, rule)
            B, _ = rule_gram(Y, rule)
            out.append(mi_from_grams(A, B, alpha)[0])
        except (ValueError, RuntimeError) as exc:
            raise EstimatorError(f"rule={rule.kind}, d={d}, N={n}, rho={rho}, run={run}: {exc}") from exc
    return out


def _map(fn, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=8))
    return [fn(j) for j in jobs]


def gaussian_table(dims, sizes, rhos, rules, runs, seed, alpha=1.01, workers=1):
    """Mean/std of MI estimates over ``runs`` draws for every (rule, d, N, rho).

    All rules see the same samples in a given cell. Rows are
    ``(rule, d, N, rho, mean_bits, std_bits, analytic_bits)``, sorted.
    """
    jobs = [(d, n, k, rho, run, seed, tuple(rules.values()), alpha)
            for d in dims for n in sizes for k, rho in enumerate(rhos) for run in range(runs)]
    results = _map(_gaussian_cell, jobs, workers)
    acc = {}
    for (d, n, k, rho, *_), vals in zip(jobs, results):
        for name, v in zip(rules, vals):
            acc.setdefault((name, d, n, k), []).append(v)
    rows = []
    for (name, d, n, k), vals in sorted(acc.items()):
        vals = np.asarray(vals)
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append((name, d, n, rhos[k], float(vals.mean()), std, float(analytic_gaussian_mi(d, rhos[k]))))
    return rows


def run_gaussians(cfg):
    """Both sweeps: rules vs dimension at fixed N, and new rule vs N at fixed d."""
    rules = {"old": WidthRule.old(cfg.gamma_old), "new": WidthRule.new(cfg.gamma_new, eps=cfg.eps)}
    dims = gaussian_table(cfg.dims, [cfg.n_samples], cfg.rhos, rules, cfg.runs, cfg.seed,
                          cfg.alpha, cfg.workers)
    sizes = gaussian_table([cfg.nsweep_dim], cfg.nsweep_sizes, cfg.rhos, {"new": rules["new"]},
                           cfg.runs, cfg.seed, cfg.alpha, cfg.workers)
    return dims, sizes


GAUSSIAN_COLUMNS = ["rule", "d", "N", "rho", "mean_bits", "std_bits", "analytic_bits"]


def write_gaussian_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAUSSIAN_COLUMNS)
        for rule, d, n, rho, mean, std, analytic in rows:
            w.writerow([rule, d, n, fmt(rho), fmt(mean), fmt(std), fmt(analytic)])


def read_gaussian_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [(r["rule"], int(r["d"]), int(r["N"]), float(r["rho"]), float(r["mean_bits"]),
                 float(r["std_bits"]), float(r["analytic_bits"])) for r in csv.DictReader(fh)]


# -- autoencoder IP runs ----------------------------------------------------

def load_mnist_splits(cfg):
    data_dir = resolve_data_dir(cfg.data_dir)
    X_train = load_mnist_idx(find_mnist_split(data_dir, "train"), split="train").X
    X_test = load_mnist_idx(find_mnist_split(data_dir, "test"), split="test").X
    if cfg.train_size is not None:
        if cfg.train_size > X_train.shape[0]:
            raise ValueError(f"train_size {cfg.train_size} exceeds {X_train.shape[0]} images")
        X_train = X_train[:cfg.train_size]
    if cfg.test_size is not None:
        if cfg.test_size > X_test.shape[0]:
            raise ValueError(f"test_size {cfg.test_size} exceeds {X_test.shape[0]} images")
        X_test = X_test[:cfg.test_size]
    return X_train, X_test


def probe_batches(X_test, n_batches, size, seed):
    if size > X_test.shape[0]:
        raise ValueError(f"probe size {size} exceeds the {X_test.shape[0]} held-out samples")
    rng = np.random.default_rng(np.random.SeedSequence([seed, PROBE_STREAM]))
    return [X_test[np.sort(rng.permutation(X_test.shape[0])[:size])] for _ in range(n_batches)]


@dataclass
class IPRun:
    trajectory: IPTrajectory
    losses: list
    network: object
    diverged: bool = False
    error: str = None


def run_train_ip(cfg, X_train=None, X_test=None, K=None):
    """Train one autoencoder and record its trajectory; arrays default to MNIST from ``cfg``."""
    if X_train is None or X_test is None:
        X_train, X_test = load_mnist_splits(cfg)
    K = cfg.K if K is None else K
    arch = Architecture(X_train.shape[1], tuple(cfg.encoder_widths), K)
    rule, overrides = cfg.width_rule()
    probes = probe_batches(X_test, cfg.probe_batches, cfg.probe_size, cfg.seed)
    recorder = IPRecorder(probes, rule, cfg.alpha, overrides, cfg.cadence)
    net = init_autoencoder(arch, cfg.seed, gain=cfg.init_gain)
    losses = []
    diverged, error = False, None

    def callback(ae):
        recorder(ae)

    try:
        losses = train(net, X_train, cfg.epochs, cfg.batch_size, cfg.lr, cfg.momentum,
                       cfg.seed, callback)
    except DivergenceError as exc:
        diverged, error = True, str(exc)

    span = max(1, int(round(cfg.smoothing_span / cfg.cadence)))
    layers = arch.layer_names[:-1]
    M = input_information(probes, rule.with_gamma(overrides.get("X", rule.gamma)), cfg.alpha)
    meta = {
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "package_version": __version__,
        "K": K,
        "rule": rule.kind,
        "gamma": rule.gamma,
        "gamma_overrides": overrides,
        "alpha": cfg.alpha,
        "eps": cfg.eps,
        "seed": cfg.seed,
        "architecture": arch.to_dict(),
        "layers": layers,
        "cadence": cfg.cadence,
        "smoothing_span_checkpoints": span,
        "n_checkpoints": len(recorder.checkpoints),
        "input_information_bits": M,
        "diverged": diverged,
        "config": cfg.to_dict(),
    }
    traj = IPTrajectory(layers, meta)
    for cp in recorder.checkpoints:
        traj.extend(cp)
    if traj.points:
        last = recorder.checkpoints[-1]
        meta["final_loss"] = losses[-1] if losses else None
        meta["dpi_final"] = [asdict(v) for v in dpi_report(last, cfg.dpi_tol)]
        meta["dpi_violating_checkpoints"] = sum(bool(dpi_report(cp, cfg.dpi_tol))
                                                for cp in recorder.checkpoints)
        outside = feasibility_report(traj.points, M, cfg.feasibility_slack)
        meta["infeasible_points"] = len(outside)
    return IPRun(traj, losses, net, diverged, error)


def write_ip_run(run, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run.trajectory.write_csv(out_dir / "trajectory.csv")
    run.trajectory.write_metadata(out_dir / "metadata.json")
    with open(out_dir / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss"])
        for i, loss in enumerate(run.losses):
            w.writerow([i, fmt(loss)])
    if run.diverged:
        run.network.save(out_dir / "divergence_checkpoint.npz")


# -- bottleneck sweep -------------------------------------------------------

@dataclass
class SweepResult:
    final: dict  # K -> layer -> (input_mi, output_mi, variance)
    layers: list
    failed: dict
    knee: int
    monotone_violations: list

    def rows(self):
        for K in sorted(self.final):
            for layer in self.layers:
                i, o, v = self.final[K][layer]
                yield K, layer, i, o, v


def _sweep_one(args):
    cfg, K, X_train, X_test = args
    run = run_train_ip(cfg, X_train, X_test, K=K)
    if run.diverged:
        return K, None, run.error
    return K, run.trajectory.final(cfg.final_window), None


def bottleneck_sweep(cfg, Ks=None, X_train=None, X_test=None):
    """Final per-layer MIs for each bottleneck size, plus the knee (intrinsic-dimension proxy)."""
    if X_train is None or X_test is None:
        X_train, X_test = load_mnist_splits(cfg)
    Ks = list(cfg.Ks if Ks is None else Ks)
    results = _map(_sweep_one, [(cfg, K, X_train, X_test) for K in Ks], cfg.workers)
    final, failed = {}, {}
    for K, fin, err in sorted(results, key=lambda r: r[0]):
        if fin is None:
            failed[K] = err
        else:
            final[K] = fin
    n_enc = len(cfg.encoder_widths)
    layers = Architecture(X_train.shape[1], tuple(cfg.encoder_widths), 1).layer_names[:-1]
    encoder_chain = layers[:n_enc + 1]
    knee = knee_estimate(final, encoder_chain, cfg.knee_threshold)
    return SweepResult(final, layers, failed, knee, output_mi_monotone(final))


def write_sweep(result, out_dir, cfg):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "layer_id", "input_mi_bits", "output_mi_bits", "mean_variance", "knee_K"])
        knee = "" if result.knee is None else result.knee
        for K, layer, i, o, v in result.rows():
            w.writerow([K, layer, fmt(i), fmt(o), fmt(v), knee])
    summary = {
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "knee_K": result.knee,
        "knee_threshold_bits": cfg.knee_threshold,
        "failed": {str(k): v for k, v in result.failed.items()},
        "output_mi_drops": result.monotone_violations,
        "config": cfg.to_dict(),
    }
    with open(out_dir / "sweep_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_with(cfg, **changes):
    return replace(cfg, **changes)
