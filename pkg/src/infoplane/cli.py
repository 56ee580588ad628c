"""Command line entry point: ``infoplane gaussians|train|sweep|estimate``."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import load_matrix
from .experiments import (RunConfig, bottleneck_sweep, run_gaussians, run_train_ip,
                          write_gaussian_csv, write_ip_run, write_sweep)
from .ip import EstimatorError
from .mi import WidthRule, mutual_information

log = logging.getLogger("infoplane")


def _json_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _json_value(value)
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="base random seed (u64)")
    common.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    common.add_argument("--workers", type=int, help="worker processes for independent cells")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (value parsed as JSON when possible)")
    common.add_argument("-v", "--verbose", action="store_true")

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--preset", choices=["desk", "full"])
    train_opts.add_argument("--data-dir", help="MNIST directory (falls back to $INFOPLANE_DATA_DIR)")
    train_opts.add_argument("--rule", choices=["new", "old", "silverman"])
    train_opts.add_argument("--gamma", type=float)
    train_opts.add_argument("--epochs", type=int)

    parser = argparse.ArgumentParser(prog="infoplane", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gaussians", parents=[common], help="correlated-Gaussians benchmark")

    p = sub.add_parser("train", parents=[common, train_opts], help="train one autoencoder and record its IP")
    p.add_argument("--K", type=int, help="bottleneck size")

    p = sub.add_parser("sweep", parents=[common, train_opts], help="final IP values across bottleneck sizes")
    p.add_argument("--Ks", type=lambda s: [int(k) for k in s.split(",")], help="comma-separated K list")

    p = sub.add_parser("estimate", parents=[common], help="MI between two sample files")
    p.add_argument("x_path")
    p.add_argument("y_path")
    p.add_argument("--rule", choices=["new", "old", "silverman"], default="new")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.01)
    p.add_argument("--eps", type=float, default=1e-8)
    return parser


def load_config(args, extra=None):
    overrides = {"out": args.out, "seed": args.seed, "workers": args.workers}
    overrides.update(extra or {})
    overrides.update(_parse_set(args.set))
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values = json.load(fh)
    return RunConfig.build(values, overrides)


def _train_overrides(args):
    return {"preset": args.preset, "data_dir": args.data_dir, "rule": args.rule,
            "gamma": args.gamma, "epochs": args.epochs}


def cmd_gaussians(args):
    cfg = load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dims, sizes = run_gaussians(cfg)
    write_gaussian_csv(out / "gaussians.csv", dims)
    write_gaussian_csv(out / "gaussians_nsweep.csv", sizes)
    summary = {"gaussians_csv": str(out / "gaussians.csv"),
               "nsweep_csv": str(out / "gaussians_nsweep.csv"),
               "rows": len(dims) + len(sizes)}
    print(json.dumps(summary) if args.json else f"wrote {summary['rows']} rows to {out}")
    return 0


def cmd_train(args):
    cfg = load_config(args, {**_train_overrides(args), "K": args.K})
    run = run_train_ip(cfg)
    write_ip_run(run, cfg.out)
    meta = run.trajectory.metadata
    if run.diverged:
        log.error("training diverged (%s); checkpoint written to %s", run.error, cfg.out)
        return 2
    summary = {"out": cfg.out, "K": meta["K"], "checkpoints": meta["n_checkpoints"],
               "final_loss": meta.get("final_loss"),
               "dpi_violations_final": len(meta.get("dpi_final", []))}
    print(json.dumps(summary) if args.json else
          f"K={summary['K']}: {summary['checkpoints']} checkpoints, final loss "
          f"{summary['final_loss']}, {summary['dpi_violations_final']} DPI flags at the end")
    return 0


def cmd_sweep(args):
    cfg = load_config(args, {**_train_overrides(args), "Ks": args.Ks})
    result = bottleneck_sweep(cfg)
    write_sweep(result, cfg.out, cfg)
    summary = {"out": cfg.out, "knee_K": result.knee, "failed": sorted(result.failed)}
    print(json.dumps(summary) if args.json else
          f"knee K={result.knee}; failed Ks: {sorted(result.failed) or 'none'}")
    return 0


def _width(w):
    w = np.asarray(w)
    return float(w) if w.ndim == 0 else w.tolist()


def cmd_estimate(args):
    X = load_matrix(args.x_path)
    Y = load_matrix(args.y_path)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"sample count mismatch: {args.x_path} has {X.shape[0]} rows, "
                         f"{args.y_path} has {Y.shape[0]}")
    if args.rule == "silverman":
        rule = WidthRule.silverman()
    else:
        rule = WidthRule(kind=args.rule, gamma=args.gamma, eps=args.eps)
    est = mutual_information(X, Y, rule=rule, alpha=args.alpha)
    if args.json:
        print(json.dumps({"mi_bits": est.value_bits, "width_x": _width(est.width_x),
                          "width_y": _width(est.width_y), "N": X.shape[0], "alpha": args.alpha,
                          "eps": args.eps, **rule.describe()}))
    else:
        print(f"I = {est.value_bits:.6f} bits (N={X.shape[0]}, rule={args.rule}, "
              f"width_x={_width(est.width_x)}, width_y={_width(est.width_y)})")
    return 0


COMMANDS = {"gaussians": cmd_gaussians, "train": cmd_train, "sweep": cmd_sweep,
            "estimate": cmd_estimate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, EstimatorError) as exc:
        print(f"infoplane {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
