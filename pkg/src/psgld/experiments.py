"""Named desk-scale experiment presets.

Each runner returns a metrics document (dict) and a mapping of curve
names to row lists; the CLI writes them as ``metrics.json`` and
``curve_<name>.csv``.  Real datasets are used when present under the
data root (``PSGLD_DATA_DIR``); otherwise the deterministic synthetic
stand-ins from ``data_io`` are substituted and named in the document.

Step-size conventions: the logistic and network presets quote the
literature values, which are stated for mean-gradient updates; the
equivalent step for the N-scaled update rule used here is
``quoted / N``, recorded as ``eps_effective`` in every document.
"""

from __future__ import annotations

import time
import warnings
from pathlib import Path

import numpy as np

from . import data_io, diagnostics, oracle
from .models import GaussianTarget, LogisticRegressionModel, MlpModel, sigmoid
from .model_api import PriorConfig
from .samplers import (
    Assumption1Warning,
    ConstantSchedule,
    SamplerConfig,
    run_chain,
)

SCHEMA = "psgld-metrics/1"

SIM2D_EPS_GRID = (0.03, 0.1, 0.3)
SIM2D_SEEDS = 10
SIM2D_ITERS = 200_000
SIM2D_BURN_IN = 1000

AUSTRALIAN_EPS = 1e-4
AUSTRALIAN_ITERS = 5000
AUSTRALIAN_BURN_IN = 1000
AUSTRALIAN_SEEDS = 50
AUSTRALIAN_MINIBATCH = 5
AUSTRALIAN_PRIOR_VAR = 100.0
AUSTRALIAN_MH_STEPS = 1_000_000
AUSTRALIAN_MH_BURN_IN = 100_000

A9A_EPS_QUOTED = 5e-2
A9A_ITERS = 15_000
A9A_BURN_IN = 500
A9A_THINNING = 50
A9A_MINIBATCH = 50
A9A_PRIOR_VAR = 10.0

FNN_LAYERS = (784, 100, 10)
FNN_TRAIN = 10_000
FNN_TEST = 2000
FNN_EPOCHS = 5
FNN_MINIBATCH = 20
FNN_BURN_IN = 1500
FNN_THINNING = 50
FNN_PRIOR_VAR = 1.0
#: per-algorithm mean-gradient step sizes, tuned at desk scale
FNN_STEPS = {"sgd": 0.03, "sgld": 0.1, "rmsprop": 1e-3, "psgld": 3e-3}


def validate_metrics(doc: dict) -> bool:
    """Check a metrics document against the schema; raises on violation."""
    required = {
        "schema", "experiment", "seed", "config", "metrics", "curves",
        "wall_clock_seconds",
    }
    missing = required - doc.keys()
    if missing:
        raise ValueError(f"metrics document missing keys {sorted(missing)}")
    if doc["schema"] != SCHEMA:
        raise ValueError(f"schema {doc['schema']!r} != {SCHEMA!r}")
    for m in doc["metrics"]:
        if not {"name", "value", "units"} <= m.keys():
            raise ValueError(f"malformed metric entry {m}")
        if isinstance(m["value"], float) and not np.isfinite(m["value"]):
            raise ValueError(f"non-finite metric {m['name']}")
    return True


def _doc(name, seed, config, metrics, curves, wall):
    for m in metrics:
        v = m["value"]
        if isinstance(v, float) and not np.isfinite(v):
            raise ValueError(f"non-finite metric {m['name']}")
    return {
        "schema": SCHEMA,
        "experiment": name,
        "seed": seed,
        "config": config,
        "metrics": metrics,
        "curves": sorted(curves),
        "wall_clock_seconds": wall,
    }


def _metric(name, value, units=""):
    return {"name": name, "value": value, "units": units}


def _apply_overrides(params: dict, overrides) -> dict:
    params = dict(params)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ValueError(f"unknown override {key!r}; known: {sorted(params)}")
        params[key] = type(params[key])(value) if params[key] is not None else value
    return params


def _quiet_run(model, config, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", Assumption1Warning)
        return run_chain(model, config, **kw)


# ---------------------------------------------------------------------------
# sim2d: covariance reconstruction on the 2-D Gaussian


def sim2d(seed=0, overrides=None):
    p = _apply_overrides(
        {
            "eps_grid": SIM2D_EPS_GRID,
            "n_seeds": SIM2D_SEEDS,
            "total_iters": SIM2D_ITERS,
            "burn_in": SIM2D_BURN_IN,
            "cov_diag": (0.16, 1.0),
            "alpha": 0.99,
            "gamma_term": True,
        },
        overrides,
    )
    t0 = time.time()
    target = GaussianTarget(mean=np.zeros(2), cov_diag=np.asarray(p["cov_diag"]))
    true_cov = np.diag(p["cov_diag"])

    rows = []
    medians = {}
    for eps in p["eps_grid"]:
        for alg in ("sgld", "psgld"):
            errs, acts = [], []
            for k in range(p["n_seeds"]):
                cfg = SamplerConfig(
                    algorithm=alg,
                    schedule=ConstantSchedule(eps),
                    total_iters=p["total_iters"],
                    burn_in=p["burn_in"],
                    thinning=1,
                    seed=seed + k,
                    gamma_term=(alg == "psgld" and p["gamma_term"]),
                    alpha=p["alpha"],
                )
                trace = _quiet_run(target, cfg)
                err = diagnostics.covariance_error(trace, true_cov)
                act_i = [
                    diagnostics.act_of_values(trace.samples[:, i]) for i in range(2)
                ]
                errs.append(err)
                acts.append(act_i)
                rows.append([eps, alg, seed + k, err, act_i[0], act_i[1]])
            acts = np.asarray(acts)
            medians[(eps, alg)] = (
                float(np.median(errs)),
                float(np.median(acts[:, 0])),
                float(np.median(acts[:, 1])),
            )

    metrics = []
    for (eps, alg), (err, a1, a2) in medians.items():
        tag = f"{alg}_eps{eps:g}"
        metrics.append(_metric(f"median_cov_error_{tag}", err, "frobenius"))
        metrics.append(_metric(f"median_act1_{tag}", a1, "iterations"))
        metrics.append(_metric(f"median_act2_{tag}", a2, "iterations"))
    wall = time.time() - t0
    doc = _doc("sim2d", seed, p, metrics, ["sweep"], wall)
    curves = {"sweep": [["eps", "algorithm", "seed", "cov_error", "act_1", "act_2"]] + rows}
    return doc, curves


# ---------------------------------------------------------------------------
# blr_australian: ESS and oracle agreement on the small credit task


def _australian_dataset(data_root=None):
    root = data_io.data_dir(data_root)
    if root is not None:
        try:
            return data_io.load_australian(root)
        except (FileNotFoundError, data_io.ParseError):
            pass
    return data_io.synth_australian_like()


def _se_per_coordinate(trace):
    """Per-coordinate Monte Carlo standard error using per-coordinate ESS."""
    sd = trace.samples.std(axis=0, ddof=1)
    ess = diagnostics.coordinate_ess(trace)
    return sd / np.sqrt(ess)


def blr_australian(seed=0, overrides=None, data_root=None):
    p = _apply_overrides(
        {
            "eps": AUSTRALIAN_EPS,
            "total_iters": AUSTRALIAN_ITERS,
            "burn_in": AUSTRALIAN_BURN_IN,
            "n_seeds": AUSTRALIAN_SEEDS,
            "minibatch_size": AUSTRALIAN_MINIBATCH,
            "prior_var": AUSTRALIAN_PRIOR_VAR,
            "mh_steps": AUSTRALIAN_MH_STEPS,
            "mh_burn_in": AUSTRALIAN_MH_BURN_IN,
        },
        overrides,
    )
    t0 = time.time()
    ds = _australian_dataset(data_root)
    model = LogisticRegressionModel(ds, PriorConfig(sigma_sq=p["prior_var"]))

    def chain(alg, chain_seed):
        cfg = SamplerConfig(
            algorithm=alg,
            schedule=ConstantSchedule(p["eps"]),
            total_iters=p["total_iters"],
            burn_in=p["burn_in"],
            thinning=1,
            seed=chain_seed,
            minibatch_size=p["minibatch_size"],
        )
        return _quiet_run(model, cfg)

    rows = []
    min_ess = {"sgld": [], "psgld": []}
    for k in range(p["n_seeds"]):
        for alg in ("sgld", "psgld"):
            trace = chain(alg, seed + k)
            m = float(diagnostics.coordinate_ess(trace).min())
            min_ess[alg].append(m)
            rows.append([alg, seed + k, m])

    mh = oracle.mh_chain(
        model,
        oracle.MhConfig(
            steps=p["mh_steps"], burn_in=p["mh_burn_in"], seed=seed + 10_000
        ),
    )
    mh_mean = mh.samples.mean(axis=0)
    mh_se = _se_per_coordinate(mh)

    ptrace = chain("psgld", seed)
    p_mean = ptrace.samples.mean(axis=0)
    p_se = _se_per_coordinate(ptrace)

    distance = float(np.linalg.norm(p_mean - mh_mean))
    combined_se = float(np.sqrt(np.sum(p_se**2 + mh_se**2)))

    metrics = [
        _metric("median_min_ess_psgld", float(np.median(min_ess["psgld"])), "samples"),
        _metric("median_min_ess_sgld", float(np.median(min_ess["sgld"])), "samples"),
        _metric("posterior_mean_distance", distance, "euclidean"),
        _metric("combined_se", combined_se, "euclidean"),
        _metric("distance_over_se", distance / combined_se, "ratio"),
        _metric("mh_acceptance_rate", mh.extras["acceptance_rate"], "fraction"),
        _metric("mh_proposal_std", mh.extras["proposal_std"], ""),
    ]
    p["dataset"] = ds.name
    wall = time.time() - t0
    doc = _doc("blr_australian", seed, p, metrics, ["min_ess"], wall)
    curves = {"min_ess": [["algorithm", "seed", "min_ess"]] + rows}
    return doc, curves


# ---------------------------------------------------------------------------
# blr_a9a: ensemble test error and convergence speed on the census task


def _a9a_datasets(data_root=None):
    root = data_io.data_dir(data_root)
    if root is not None:
        try:
            return data_io.load_a9a(root)
        except (FileNotFoundError, data_io.ParseError):
            pass
    return data_io.synth_a9a_like()


def ensemble_error_curve(trace, model, X_test, y_test):
    """Test error of the ensemble truncated at each recorded sample."""
    acc = np.zeros(X_test.shape[0])
    errs = []
    for k, theta in enumerate(trace.samples, 1):
        acc += sigmoid(X_test @ theta)
        pred = np.where(acc / k >= 0.5, 1, -1)
        errs.append(float(np.mean(pred != y_test) * 100.0))
    iters = trace.burn_in + trace.thinning * np.arange(1, len(errs) + 1)
    return iters, np.asarray(errs)


def blr_a9a(seed=0, overrides=None, data_root=None):
    p = _apply_overrides(
        {
            "eps_quoted": A9A_EPS_QUOTED,
            "total_iters": A9A_ITERS,
            "burn_in": A9A_BURN_IN,
            "thinning": A9A_THINNING,
            "minibatch_size": A9A_MINIBATCH,
            "prior_var": A9A_PRIOR_VAR,
            "target_error": 15.0,
        },
        overrides,
    )
    t0 = time.time()
    train, test = _a9a_datasets(data_root)
    model = LogisticRegressionModel(train, PriorConfig(sigma_sq=p["prior_var"]))
    eps_eff = p["eps_quoted"] / train.N
    X_test = test.features.toarray() if hasattr(test.features, "toarray") else test.features
    y_test = np.asarray(test.labels)

    rows = []
    metrics = []
    for alg in ("psgld", "sgld"):
        cfg = SamplerConfig(
            algorithm=alg,
            schedule=ConstantSchedule(eps_eff),
            total_iters=p["total_iters"],
            burn_in=p["burn_in"],
            thinning=p["thinning"],
            seed=seed,
            minibatch_size=p["minibatch_size"],
        )
        trace = _quiet_run(model, cfg)
        iters, errs = ensemble_error_curve(trace, model, X_test, y_test)
        rows += [[int(i), alg, e] for i, e in zip(iters, errs)]
        hit = errs <= p["target_error"]
        reach = int(iters[np.argmax(hit)]) if hit.any() else -1
        metrics.append(_metric(f"final_test_error_{alg}", float(errs[-1]), "percent"))
        metrics.append(
            _metric(f"iters_to_{p['target_error']:g}pct_{alg}", reach, "iterations")
        )
    metrics.append(_metric("eps_effective", eps_eff, "per-iteration"))
    p["dataset"] = train.name
    wall = time.time() - t0
    doc = _doc("blr_a9a", seed, p, metrics, ["learning"], wall)
    curves = {"learning": [["iteration", "algorithm", "test_error"]] + rows}
    return doc, curves


# ---------------------------------------------------------------------------
# fnn_small: feedforward network at desk scale


def _mnist_datasets(n_train, n_test, data_root=None):
    root = data_io.data_dir(data_root)
    if root is not None:
        try:
            return data_io.load_mnist(root, n_train=n_train, n_test=n_test)
        except (FileNotFoundError, data_io.ParseError):
            pass
    return data_io.synth_mnist_like(n_train=n_train, n_test=n_test)


def fnn_small(seed=0, overrides=None, data_root=None):
    p = _apply_overrides(
        {
            "layers": FNN_LAYERS,
            "n_train": FNN_TRAIN,
            "n_test": FNN_TEST,
            "epochs": FNN_EPOCHS,
            "minibatch_size": FNN_MINIBATCH,
            "burn_in": FNN_BURN_IN,
            "thinning": FNN_THINNING,
            "prior_var": FNN_PRIOR_VAR,
            "steps": FNN_STEPS,
        },
        overrides,
    )
    t0 = time.time()
    train, test = _mnist_datasets(p["n_train"], p["n_test"], data_root)
    model = MlpModel(list(p["layers"]), train, PriorConfig(sigma_sq=p["prior_var"]))
    batches_per_epoch = train.N // p["minibatch_size"]
    total_iters = p["epochs"] * batches_per_epoch

    metrics = []
    rows = []
    for alg in ("sgd", "sgld", "rmsprop", "psgld"):
        eps_eff = p["steps"][alg] / train.N
        cfg = SamplerConfig(
            algorithm=alg,
            schedule=ConstantSchedule(eps_eff),
            total_iters=total_iters,
            burn_in=min(p["burn_in"], total_iters - 1),
            thinning=min(p["thinning"], total_iters - min(p["burn_in"], total_iters - 1)),
            seed=seed,
            minibatch_size=p["minibatch_size"],
        )
        trace = _quiet_run(model, cfg)
        if alg in ("sgld", "psgld"):
            err = diagnostics.test_error(trace, model, test)
        else:
            err = diagnostics.point_test_error(trace.samples[-1], model, test)
        metrics.append(_metric(f"test_error_{alg}", err, "percent"))
        metrics.append(_metric(f"eps_effective_{alg}", eps_eff, "per-iteration"))
        iters, errs = _point_error_curve(trace, model, test)
        rows += [[int(i), alg, e] for i, e in zip(iters, errs)]
    p["total_iters"] = total_iters
    p["dataset"] = train.name
    wall = time.time() - t0
    doc = _doc("fnn_small", seed, p, metrics, ["learning"], wall)
    curves = {"learning": [["iteration", "algorithm", "test_error"]] + rows}
    return doc, curves


def _point_error_curve(trace, model, test):
    iters = trace.burn_in + trace.thinning * np.arange(1, len(trace) + 1)
    errs = [
        diagnostics.point_test_error(theta, model, test) for theta in trace.samples
    ]
    return iters, errs


EXPERIMENTS = {
    "sim2d": sim2d,
    "blr_australian": blr_australian,
    "blr_a9a": blr_a9a,
    "fnn_small": fnn_small,
}


def run_experiment(name, seed=0, overrides=None, data_root=None, out_dir=None):
    """Run a named experiment; write metrics/curves when out_dir given."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; have {sorted(EXPERIMENTS)}")
    fn = EXPERIMENTS[name]
    if name == "sim2d":
        doc, curves = fn(seed=seed, overrides=overrides)
    else:
        doc, curves = fn(seed=seed, overrides=overrides, data_root=data_root)
    if out_dir is not None:
        write_outputs(doc, curves, out_dir)
    return doc, curves


def write_outputs(doc, curves, out_dir):
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve_files = []
    for cname, rowlist in curves.items():
        fname = f"curve_{cname}.csv"
        curve_files.append(fname)
        with open(out / fname, "w") as fh:
            for row in rowlist:
                fh.write(",".join(_csv_cell(c) for c in row) + "\n")
    doc = dict(doc)
    doc["curves"] = sorted(curve_files)
    with open(out / "metrics.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")
    return out / "metrics.json"


def _csv_cell(c):
    if isinstance(c, float):
        return repr(c)
    return str(c)


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o)}")
