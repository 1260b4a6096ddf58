"""Command-line entry points.

Subcommands: ``sample`` (run one chain from a config file), ``diagnose``
(ACT/ESS/averages of a stored trace), ``experiment`` (named presets
emitting metrics and curve CSVs), and ``benchmark`` (compiled kernels
against the pure-python fallback).

Exit codes: 0 success, 1 runtime failure (divergence, degenerate trace,
stalled oracle), 2 configuration/input errors.  ``PSGLD_DATA_DIR``
points at real dataset files; synthetic stand-ins are used otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import data_io, diagnostics, experiments, kernels
from .data_io import ConfigError, ParseError, TraceFormatError
from .model_api import PriorConfig
from .models import GaussianTarget, LogisticRegressionModel, MlpModel
from .oracle import MhStalledError
from .samplers import (
    BlockDecaySchedule,
    ConstantSchedule,
    DivergenceError,
    PolynomialSchedule,
    SamplerConfig,
    run_chain,
)

SCHEMA = experiments.SCHEMA


def _float_list(text):
    return np.array([float(tok) for tok in str(text).split(",")])


def _int_list(text):
    return [int(tok) for tok in str(text).split(",")]


def build_model(cfg: dict, data_root=None):
    kind = cfg.get("model")
    if kind == "gaussian":
        return GaussianTarget(
            mean=_float_list(cfg.get("mean", "0,0")),
            cov_diag=_float_list(cfg.get("cov_diag", "0.16,1")),
        )
    if kind == "blr":
        ds = _dataset_from_spec(cfg.get("dataset", "synth:australian"), data_root)
        return LogisticRegressionModel(
            ds, PriorConfig(sigma_sq=float(cfg.get("prior_sigma_sq", 1.0)))
        )
    if kind == "mlp":
        ds = _dataset_from_spec(cfg.get("dataset", "synth:mnist"), data_root)
        layers = _int_list(cfg.get("layer_sizes", "784,100,10"))
        return MlpModel(
            layers, ds, PriorConfig(sigma_sq=float(cfg.get("prior_sigma_sq", 1.0)))
        )
    raise ConfigError(f"model must be gaussian, blr or mlp, got {kind!r}")


def _dataset_from_spec(spec, data_root=None):
    spec = str(spec)
    if spec == "synth:australian":
        return data_io.synth_australian_like()
    if spec == "synth:a9a":
        return data_io.synth_a9a_like()[0]
    if spec == "synth:mnist":
        return data_io.synth_mnist_like()[0]
    if spec.startswith("synth:blr:"):
        _, _, params = spec.partition("synth:blr:")
        n, d, seed = (int(x) for x in params.split(","))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        return data_io.synth_blr(n, d, seed, true_theta=rng.standard_normal(d))
    if spec.startswith("idx:"):
        img, _, lbl = spec[4:].partition(",")
        return data_io.Dataset(
            features=data_io.read_idx(img), labels=data_io.read_idx(lbl), name="idx"
        )
    return data_io.parse_libsvm(spec, name=Path(spec).name)


def build_schedule(cfg: dict):
    kind = cfg.get("schedule", "constant")
    if kind == "constant":
        return ConstantSchedule(float(cfg.get("eps0", 1e-3)))
    if kind == "polynomial":
        return PolynomialSchedule(
            a=float(cfg.get("sched_a", 1.0)),
            b=float(cfg.get("sched_b", 0.0)),
            gamma=float(cfg.get("sched_gamma", 1.0)),
        )
    if kind == "block_decay":
        return BlockDecaySchedule(
            eps0=float(cfg.get("eps0", 1e-3)),
            L_epochs=int(cfg.get("L_epochs", 20)),
            epoch_len=int(cfg.get("epoch_len", 100)),
        )
    raise ConfigError(f"unknown schedule {kind!r}")


def build_sampler_config(cfg: dict) -> SamplerConfig:
    return SamplerConfig(
        algorithm=str(cfg.get("algorithm", "psgld")),
        schedule=build_schedule(cfg),
        total_iters=int(cfg.get("total_iters", 1000)),
        burn_in=int(cfg.get("burn_in", 0)),
        thinning=int(cfg.get("thinning", 1)),
        minibatch_size=int(cfg.get("minibatch_size", 1)),
        seed=int(cfg.get("seed", 0)),
        gamma_term=bool(cfg.get("gamma_term", False)),
        alpha=float(cfg.get("alpha", 0.99)),
        lam=float(cfg.get("lam", 1e-5)),
    )


def _apply_cli_overrides(cfg, args):
    for item in args.override or []:
        if "=" not in item:
            raise ConfigError(f"--override expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        key = key.strip()
        if key not in data_io.KNOWN_CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = data_io._parse_value(val, key, 0)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "algorithm", None) is not None:
        cfg["algorithm"] = args.algorithm
    return cfg


def _write_metrics(out_dir, doc):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "metrics.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def cmd_sample(args) -> int:
    cfg = data_io.parse_config(args.config)
    _apply_cli_overrides(cfg, args)
    model = build_model(cfg, data_root=args.data_dir)
    sampler_cfg = build_sampler_config(cfg)
    out_dir = Path(args.out or cfg.get("out_dir", "."))

    t0 = time.time()
    trace = run_chain(model, sampler_cfg)
    wall = time.time() - t0

    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / f"trace_{model.name}_{sampler_cfg.algorithm}.csv"
    data_io.write_trace(trace, trace_path)
    doc = {
        "schema": SCHEMA,
        "experiment": "sample",
        "seed": sampler_cfg.seed,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "metrics": [
            {"name": "n_samples", "value": len(trace), "units": "samples"},
            {"name": "final_eps", "value": float(trace.eps[-1]), "units": ""},
            {"name": "S_T", "value": trace.S_T, "units": ""},
            {
                "name": "iters_per_second",
                "value": trace.total_iters / max(wall, 1e-9),
                "units": "1/s",
            },
            {"name": "all_finite", "value": 1, "units": "bool"},
        ],
        "curves": [],
        "trace": trace_path.name,
        "wall_clock_seconds": wall,
        "kernel_backend": kernels.BACKEND,
    }
    _write_metrics(out_dir, doc)
    print(f"wrote {trace_path}")
    return 0


_PHI_BUILDERS = {
    "sqnorm": lambda: diagnostics.TestFunctional(
        "sqnorm", lambda th: float(np.dot(th, th))
    ),
}


def _parse_phi(spec: str) -> diagnostics.TestFunctional:
    if spec in _PHI_BUILDERS:
        return _PHI_BUILDERS[spec]()
    kind, _, idx = spec.partition(":")
    if kind == "coord":
        return diagnostics.coordinate(int(idx))
    if kind == "coordsq":
        return diagnostics.coordinate_square(int(idx))
    raise ConfigError(f"unknown functional {spec!r} (use coord:i, coordsq:i, sqnorm)")


def cmd_diagnose(args) -> int:
    trace = data_io.read_trace(args.trace)
    if len(trace) < 2:
        print("error: insufficient samples (need at least 2)", file=sys.stderr)
        return 1
    phi = _parse_phi(args.phi)
    t0 = time.time()
    report = diagnostics.diagnose(trace, phi)
    metrics = [
        {"name": "act", "value": report.tau, "units": "samples"},
        {"name": "ess", "value": report.ess, "units": "samples"},
        {"name": "phi_hat", "value": report.phi_hat, "units": ""},
        {"name": "phi_hat_weighted", "value": report.phi_hat_weighted, "units": ""},
        {"name": "n_samples", "value": len(trace), "units": "samples"},
    ]
    if args.truth_cov is not None:
        err = diagnostics.covariance_error(trace, _float_list(args.truth_cov))
        metrics.append({"name": "cov_error", "value": err, "units": "frobenius"})
    doc = {
        "schema": SCHEMA,
        "experiment": "diagnose",
        "seed": trace.seed,
        "config": {"trace": str(args.trace), "phi": args.phi},
        "metrics": metrics,
        "curves": [],
        "wall_clock_seconds": time.time() - t0,
    }
    if args.out:
        _write_metrics(args.out, doc)
    print(json.dumps(doc, sort_keys=True, indent=2))
    return 0


def cmd_experiment(args) -> int:
    overrides = {}
    for item in args.override or []:
        if "=" not in item:
            raise ConfigError(f"--override expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        try:
            overrides[key.strip()] = json.loads(val)
        except json.JSONDecodeError:
            overrides[key.strip()] = val
    doc, curves = experiments.run_experiment(
        args.name,
        seed=args.seed,
        overrides=overrides or None,
        data_root=args.data_dir,
        out_dir=args.out,
    )
    doc = dict(doc)
    doc["kernel_backend"] = kernels.BACKEND
    print(json.dumps({m["name"]: m["value"] for m in doc["metrics"]},
                     sort_keys=True, indent=2))
    return 0


def cmd_benchmark(args) -> int:
    from .samplers import SamplerConfig

    target = GaussianTarget(mean=np.zeros(2), cov_diag=np.array([0.16, 1.0]))
    ds = data_io.synth_australian_like()
    blr = LogisticRegressionModel(ds, PriorConfig(sigma_sq=100.0))
    workloads = {
        "gaussian_psgld": (
            target,
            SamplerConfig(
                algorithm="psgld",
                schedule=ConstantSchedule(0.1),
                total_iters=args.iters,
                burn_in=0,
                thinning=max(1, args.iters // 100),
                seed=1,
            ),
        ),
        "blr_psgld": (
            blr,
            SamplerConfig(
                algorithm="psgld",
                schedule=ConstantSchedule(1e-4),
                total_iters=args.iters // 4,
                burn_in=0,
                thinning=max(1, args.iters // 400),
                seed=1,
                minibatch_size=5,
            ),
        ),
    }
    backends = ["python"]
    try:
        kernels.get_backend("compiled")
        backends.insert(0, "compiled")
    except ImportError:
        pass

    results = []
    for wname, (model, cfg) in workloads.items():
        speeds = {}
        traces = {}
        for backend in backends:
            t0 = time.time()
            with np.errstate(all="ignore"):
                traces[backend] = run_chain(model, cfg, backend=backend)
            dt = time.time() - t0
            speeds[backend] = cfg.total_iters / dt
            print(f"{wname:16} {backend:9} {speeds[backend]:12.0f} iters/s")
        if len(backends) == 2:
            agree = np.allclose(
                traces["compiled"].samples, traces["python"].samples,
                rtol=1e-9, atol=1e-12,
            )
            speedup = speeds["compiled"] / speeds["python"]
            print(f"{wname:16} speedup x{speedup:.1f}  traces agree: {agree}")
            results.append(
                {"name": f"speedup_{wname}", "value": speedup, "units": "x"}
            )
        for backend in backends:
            results.append(
                {
                    "name": f"iters_per_second_{wname}_{backend}",
                    "value": speeds[backend],
                    "units": "1/s",
                }
            )
    if args.out:
        doc = {
            "schema": SCHEMA,
            "experiment": "benchmark",
            "seed": 1,
            "config": {"iters": args.iters, "backends": backends},
            "metrics": results,
            "curves": [],
            "wall_clock_seconds": 0.0,
        }
        _write_metrics(args.out, doc)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psgld",
        description="Preconditioned stochastic-gradient Langevin sampling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run one chain from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--algorithm", default=None,
                   choices=["sgd", "sgld", "psgld", "rmsprop"])
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.add_argument("--data-dir", default=None)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("diagnose", help="ACT/ESS/averages of a stored trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--phi", default="coord:0")
    p.add_argument("--truth-cov", default=None,
                   help="comma-separated true covariance diagonal")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("experiment", help="run a named experiment preset")
    p.add_argument("--name", required=True, choices=sorted(experiments.EXPERIMENTS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.add_argument("--data-dir", default=None)
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("benchmark", help="compare kernel backends")
    p.add_argument("--iters", type=int, default=200_000)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DivergenceError, MhStalledError, diagnostics.DegenerateTraceError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 1
    except (ConfigError, ParseError, TraceFormatError, data_io.DatasetError,
            FileNotFoundError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
