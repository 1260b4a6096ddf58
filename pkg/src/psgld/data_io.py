"""Dataset ingestion, synthetic generators, and trace persistence.

Real formats: LIBSVM sparse text (1-based, strictly increasing indices)
and big-endian IDX binaries for image/label tensors.  The experiment
runners fall back to deterministic synthetic stand-ins generated here
when the real files are absent (point ``PSGLD_DATA_DIR`` at a directory
containing them to use the originals).

Traces persist as one JSON header line followed by CSV rows
(step size, then the parameter values) with shortest-roundtrip float
formatting, so write/read is bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .models import sigmoid
from .samplers import SampleTrace

TRACE_FORMAT = "psgld-trace/1"


class ParseError(ValueError):
    """Malformed input file; the message carries the line number."""


class DatasetError(ValueError):
    pass


class TraceFormatError(ValueError):
    pass


@dataclass
class Dataset:
    """Feature matrix (dense ndarray or scipy CSR) plus integer labels."""

    features: object
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.N == 0:
            raise DatasetError(f"{self.name}: no rows")
        if self.labels.shape[0] != self.N:
            raise DatasetError(f"{self.name}: label/feature row mismatch")

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]


# ---------------------------------------------------------------------------
# LIBSVM sparse text


def _iter_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, "r") as fh:
            yield from fh
    else:
        yield from source


def parse_libsvm(source, n_features=None, name="libsvm") -> Dataset:
    """Parse LIBSVM sparse text into a CSR dataset.

    Lines are ``<label> <index>:<value> ...`` with 1-based, strictly
    increasing indices; {0, 1} labels are remapped to {-1, +1}.  Pass
    ``n_features`` to pin the column count (needed to align train/test
    splits whose maximum seen index differs).
    """
    indptr = [0]
    col_idx = []
    values = []
    labels = []
    max_idx = 0
    for lineno, raw in enumerate(_iter_lines(source), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ParseError(f"{name} line {lineno}: bad label {parts[0]!r}") from None
        prev = 0
        for tok in parts[1:]:
            try:
                idx_s, val_s = tok.split(":")
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"{name} line {lineno}: bad token {tok!r}") from None
            if idx <= prev:
                raise ParseError(
                    f"{name} line {lineno}: indices must be 1-based strictly increasing"
                )
            if n_features is not None and idx > n_features:
                raise ParseError(
                    f"{name} line {lineno}: index {idx} exceeds n_features={n_features}"
                )
            prev = idx
            col_idx.append(idx - 1)
            values.append(val)
        max_idx = max(max_idx, prev)
        indptr.append(len(col_idx))
        labels.append(label)
    if not labels:
        raise DatasetError(f"{name}: no rows")

    labels = np.asarray(labels)
    uniq = set(np.unique(labels))
    if uniq <= {0.0, 1.0}:
        labels = np.where(labels > 0, 1, -1)
    elif uniq <= {-1.0, 1.0}:
        labels = labels.astype(np.int64)
    else:
        raise ParseError(f"{name}: labels must be binary, got {sorted(uniq)}")

    D = n_features if n_features is not None else max_idx
    X = sp.csr_matrix(
        (np.asarray(values), np.asarray(col_idx, dtype=np.int64), np.asarray(indptr)),
        shape=(len(labels), D),
    )
    return Dataset(features=X, labels=labels.astype(np.int64), name=name)


def serialize_libsvm(dataset: Dataset) -> str:
    """Inverse of ``parse_libsvm``; parse(serialize(d)) is identity."""
    X = dataset.features
    if not sp.issparse(X):
        X = sp.csr_matrix(X)
    X = X.tocsr()
    lines = []
    for r in range(dataset.N):
        lo, hi = X.indptr[r], X.indptr[r + 1]
        feats = " ".join(
            f"{X.indices[k] + 1}:{float(X.data[k])!r}" for k in range(lo, hi)
        )
        lines.append(f"{int(dataset.labels[r])} {feats}".rstrip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# IDX binary (big-endian image/label tensors)

IDX_MAGIC_LABELS = 0x00000801
IDX_MAGIC_IMAGES = 0x00000803


def read_idx(source):
    """Read an IDX byte stream.

    Magic 0x00000803 yields images flattened to float64 rows scaled to
    [0, 1]; magic 0x00000801 yields an int64 label vector.  The payload
    length must match the declared dimensions exactly.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            buf = fh.read()
    else:
        buf = source.read()
    if len(buf) < 4:
        raise ParseError("idx: truncated header")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic == IDX_MAGIC_LABELS:
        ndim = 1
    elif magic == IDX_MAGIC_IMAGES:
        ndim = 3
    else:
        raise ParseError(f"idx: bad magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise ParseError("idx: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    count = int(np.prod(dims))
    payload = buf[header:]
    if len(payload) != count:
        raise ParseError(
            f"idx: payload of {len(payload)} bytes does not match declared shape {dims}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    if magic == IDX_MAGIC_LABELS:
        return arr.astype(np.int64)
    n, rows, cols = dims
    return (arr.astype(np.float64) / 255.0).reshape(n, rows * cols)


def write_idx(path, array):
    """Write labels (1-D ints) or images (N x H x W in [0, 1]) as IDX."""
    array = np.asarray(array)
    with open(path, "wb") as fh:
        if array.ndim == 1:
            fh.write(struct.pack(">II", IDX_MAGIC_LABELS, array.shape[0]))
            fh.write(array.astype(np.uint8).tobytes())
        elif array.ndim == 3:
            fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, *array.shape))
            fh.write(np.round(array * 255.0).astype(np.uint8).tobytes())
        else:
            raise ValueError("expected a 1-D label or 3-D image array")


# ---------------------------------------------------------------------------
# trace persistence


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(trace: SampleTrace, path):
    """One JSON metadata line, then one CSV row per sample (eps first)."""
    header = {
        "format": TRACE_FORMAT,
        "dim": int(trace.samples.shape[1]) if trace.samples.size else int(trace.dim),
        "n_samples": int(len(trace)),
        "S_T": float(trace.S_T),
        "total_iters": trace.total_iters,
        "burn_in": trace.burn_in,
        "thinning": trace.thinning,
        "seed": trace.seed,
        "algorithm": trace.algorithm,
        "model": trace.model_name,
        "schedule": trace.schedule,
        "extras": trace.extras,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for eps, row in zip(trace.eps, trace.samples):
            fh.write(_fmt(eps) + "," + ",".join(_fmt(v) for v in row) + "\n")


def read_trace(path) -> SampleTrace:
    with open(path, "r") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"bad trace header: {e}") from None
        if header.get("format") != TRACE_FORMAT:
            raise TraceFormatError(
                f"trace format {header.get('format')!r} != {TRACE_FORMAT!r}"
            )
        dim = header["dim"]
        eps = []
        rows = []
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != dim + 1:
                raise TraceFormatError(f"line {lineno}: expected {dim + 1} columns")
            eps.append(float(parts[0]))
            rows.append([float(p) for p in parts[1:]])
    if len(rows) != header["n_samples"]:
        raise TraceFormatError(
            f"trace truncated: header says {header['n_samples']} samples, "
            f"file has {len(rows)}"
        )
    samples = np.asarray(rows) if rows else np.zeros((0, dim))
    return SampleTrace(
        samples=samples,
        eps=np.asarray(eps),
        S_T=header["S_T"],
        total_iters=header["total_iters"],
        burn_in=header["burn_in"],
        thinning=header["thinning"],
        seed=header["seed"],
        algorithm=header["algorithm"],
        model_name=header["model"],
        schedule=header["schedule"],
        extras=header["extras"],
    )


# ---------------------------------------------------------------------------
# synthetic data


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def synth_blr(N: int, D: int, seed: int, true_theta) -> Dataset:
    """Standard-normal features, labels drawn from sigmoid(theta* @ x)."""
    true_theta = np.asarray(true_theta, dtype=np.float64)
    if true_theta.shape != (D,):
        raise ValueError("true_theta must have length D")
    rng = _rng(seed)
    X = rng.standard_normal((N, D))
    p = sigmoid(X @ true_theta)
    y = np.where(rng.random(N) < p, 1, -1)
    return Dataset(features=X, labels=y.astype(np.int64), name="synth_blr")


def standardize(X: np.ndarray) -> np.ndarray:
    """Column-wise zero mean, unit variance (constant columns untouched)."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def synth_australian_like(seed: int = 701, N: int = 690, D: int = 14):
    """Stand-in for the 690 x 14 credit dataset: standardized dense
    features, labels from a fixed logistic ground truth."""
    rng = _rng(seed)
    X = rng.standard_normal((N, D))
    # a couple of binary-ish columns, like the original's categoricals
    X[:, 0] = (X[:, 0] > 0).astype(np.float64)
    X[:, 7] = (X[:, 7] > 0.5).astype(np.float64)
    X = standardize(X)
    theta_star = rng.standard_normal(D)
    theta_star *= 1.5 / np.linalg.norm(theta_star) * np.sqrt(D) / np.sqrt(14)
    p = sigmoid(X @ theta_star)
    y = np.where(rng.random(N) < p, 1, -1)
    return Dataset(features=X, labels=y.astype(np.int64), name="synth_australian")


#: one-hot group widths used by the a9a stand-in (sums to 123)
_A9A_GROUPS = (6, 8, 8, 16, 16, 7, 14, 5, 2, 41)


def _calibrate_scale(scores: np.ndarray, bayes_error: float) -> float:
    """Scale c with E[sigmoid(-c |score|)] = bayes_error (bisection)."""
    a = np.abs(scores)
    lo, hi = 1e-6, 1e3
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if float(np.mean(sigmoid(-mid * a))) > bayes_error:
            lo = mid  # too little signal; increase scale
        else:
            hi = mid
    return float(np.sqrt(lo * hi))


def synth_a9a_like(seed: int = 903, n_train: int = 32561, n_test: int = 16281,
                   D: int = 123, bayes_error: float = 0.1450):
    """Stand-in for the adult/a9a task.

    Rows activate one feature per one-hot categorical block; each block
    has a dominant category and a long popularity tail, as in census
    one-hot encodings.  Labels are logistic in a ground truth whose
    weight sits mostly on frequent features and whose scale is bisected
    so the Bayes error lands in the original's reported test-error
    regime.  Returns (train, test) CSR datasets.
    """
    assert sum(_A9A_GROUPS) == D
    rng = _rng(seed)
    n_total = n_train + n_test

    cols = []
    start = 0
    for width in _A9A_GROUPS:
        dominant = rng.uniform(0.35, 0.7)
        tail = 1.0 / np.arange(1, width)
        tail = tail / tail.sum() * (1.0 - dominant)
        pop = np.concatenate([[dominant], tail])[rng.permutation(width)]
        choice = rng.choice(width, size=n_total, p=pop)
        active = rng.random(n_total) < 0.97
        cols.append(np.where(active, start + choice, -1))
        start += width
    col_mat = np.stack(cols, axis=1)

    rows_idx, group_idx = np.nonzero(col_mat >= 0)
    col_idx = col_mat[rows_idx, group_idx]
    counts = np.bincount(rows_idx, minlength=n_total)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    X = sp.csr_matrix(
        (np.ones(col_idx.size), col_idx.astype(np.int64), indptr),
        shape=(n_total, D),
    )

    freq = np.asarray(X.mean(axis=0)).ravel()
    theta_raw = rng.standard_normal(D) * (0.05 + freq**0.8)
    scores = X @ theta_raw
    scale = _calibrate_scale(scores[:20000], bayes_error)
    p = sigmoid(scale * scores)
    y = np.where(rng.random(n_total) < p, 1, -1).astype(np.int64)

    train = Dataset(features=X[:n_train], labels=y[:n_train], name="synth_a9a")
    test = Dataset(features=X[n_train:], labels=y[n_train:], name="synth_a9a.t")
    return train, test


def synth_mnist_like(n_train: int = 10000, n_test: int = 2000, seed: int = 801,
                     side: int = 28, n_classes: int = 10,
                     class_sep: float = 0.5, noise: float = 0.45,
                     label_noise: float = 0.05,
                     scale_spread: tuple = (-1.5, 0.5)):
    """Stand-in for the digit-image task: smooth class templates plus
    pixel noise, with training-label noise and a log-uniform per-pixel
    scale spread (``scale_spread`` in log10 units).  The scale spread
    makes the loss landscape deliberately ill-conditioned, the regime
    adaptive preconditioning is built for.  Returns (train, test)
    datasets with float features and int labels.
    """
    from scipy.ndimage import gaussian_filter

    rng = _rng(seed)
    d = side * side
    base = gaussian_filter(rng.standard_normal((side, side)), sigma=5.0)
    templates = []
    for _ in range(n_classes):
        dev = gaussian_filter(rng.standard_normal((side, side)), sigma=3.0)
        t = base + class_sep * dev
        t = (t - t.min()) / (t.max() - t.min())
        templates.append(t.ravel())
    templates = np.asarray(templates)
    scales = 10.0 ** rng.uniform(scale_spread[0], scale_spread[1], size=d)

    def sample_split(n, with_label_noise):
        labels = rng.integers(0, n_classes, size=n)
        X = templates[labels] + noise * rng.standard_normal((n, d))
        np.clip(X, 0.0, 1.0, out=X)
        X = X * scales
        if with_label_noise and label_noise > 0:
            flip = rng.random(n) < label_noise
            labels = np.where(
                flip, (labels + rng.integers(1, n_classes, size=n)) % n_classes, labels
            )
        return X, labels.astype(np.int64)

    Xtr, ytr = sample_split(n_train, True)
    Xte, yte = sample_split(n_test, False)
    return (
        Dataset(features=Xtr, labels=ytr, name="synth_mnist"),
        Dataset(features=Xte, labels=yte, name="synth_mnist.t"),
    )


# ---------------------------------------------------------------------------
# real-data loaders (PSGLD_DATA_DIR)


def data_dir(explicit=None):
    root = explicit or os.environ.get("PSGLD_DATA_DIR")
    return Path(root) if root else None


def load_a9a(root):
    """(train, test) from a9a / a9a.t with the column count pinned to 123
    so both splits share one feature space."""
    root = Path(root)
    train = parse_libsvm(root / "a9a", n_features=123, name="a9a")
    test = parse_libsvm(root / "a9a.t", n_features=123, name="a9a.t")
    return train, test


def load_australian(root):
    """Dense, standardized copy of the 690 x 14 credit dataset."""
    root = Path(root)
    path = root / "australian_scale"
    if not path.exists():
        path = root / "australian"
    ds = parse_libsvm(path, n_features=14, name="australian")
    X = standardize(ds.features.toarray())
    return Dataset(features=X, labels=ds.labels, name="australian")


def load_mnist(root, n_train=None, n_test=None):
    root = Path(root)
    Xtr = read_idx(root / "train-images-idx3-ubyte")
    ytr = read_idx(root / "train-labels-idx1-ubyte")
    Xte = read_idx(root / "t10k-images-idx3-ubyte")
    yte = read_idx(root / "t10k-labels-idx1-ubyte")
    if n_train:
        Xtr, ytr = Xtr[:n_train], ytr[:n_train]
    if n_test:
        Xte, yte = Xte[:n_test], yte[:n_test]
    return (
        Dataset(features=Xtr, labels=ytr, name="mnist"),
        Dataset(features=Xte, labels=yte, name="mnist.t"),
    )


# ---------------------------------------------------------------------------
# run configuration (flat key = value text)


class ConfigError(ValueError):
    pass


KNOWN_CONFIG_KEYS = {
    "model", "mean", "cov_diag", "dataset", "test_dataset", "prior_sigma_sq",
    "layer_sizes", "algorithm", "schedule", "eps0", "sched_a", "sched_b",
    "sched_gamma", "L_epochs", "epoch_len", "total_iters", "burn_in",
    "thinning", "minibatch_size", "seed", "gamma_term", "alpha", "lam",
    "out_dir",
}

_PATH_KEYS = {"dataset", "test_dataset"}


def _parse_value(raw: str, key: str, lineno: int):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: value for {key!r} must be quoted, numeric or boolean"
        ) from None


def parse_config(source) -> dict:
    """Flat ``key = value`` document: strings quoted, numbers and
    true/false bare, '#' comments.  Unknown keys are rejected and any
    referenced dataset path must exist."""
    cfg = {}
    for lineno, raw in enumerate(_iter_lines(source), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in KNOWN_CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = _parse_value(val, key, lineno)
    for key in _PATH_KEYS & cfg.keys():
        ref = str(cfg[key])
        if not ref.startswith("synth") and not os.path.exists(ref):
            raise ConfigError(f"{key} path does not exist: {ref}")
    return cfg
