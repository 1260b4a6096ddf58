import io
import struct

import numpy as np
import pytest

from psgld.data_io import (
    ConfigError,
    Dataset,
    DatasetError,
    ParseError,
    TraceFormatError,
    parse_config,
    parse_libsvm,
    read_idx,
    read_trace,
    serialize_libsvm,
    standardize,
    synth_a9a_like,
    synth_australian_like,
    synth_blr,
    synth_mnist_like,
    write_idx,
    write_trace,
)
from psgld.samplers import ConstantSchedule, SamplerConfig, run_chain
from psgld.models import GaussianTarget


class TestParseLibsvm:
    def test_basic_line(self):
        ds = parse_libsvm(["+1 3:1 11:0.5\n"])
        assert ds.N == 1 and ds.D == 11
        assert ds.labels[0] == 1
        row = ds.features.toarray()[0]
        assert row[2] == 1.0 and row[10] == 0.5
        assert row.sum() == 1.5

    def test_empty_stream(self):
        with pytest.raises(DatasetError, match="no rows"):
            parse_libsvm([])

    def test_malformed_token_reports_line(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_libsvm(["+1 1:1\n", "-1 2:x\n"])

    def test_bad_label_reports_line(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_libsvm(["abc 1:1\n"])

    def test_nonincreasing_indices_rejected(self):
        with pytest.raises(ParseError, match="increasing"):
            parse_libsvm(["+1 3:1 3:2\n"])
        with pytest.raises(ParseError, match="increasing"):
            parse_libsvm(["+1 5:1 2:1\n"])

    def test_zero_one_labels_remapped(self):
        ds = parse_libsvm(["0 1:1\n", "1 1:2\n"])
        np.testing.assert_array_equal(ds.labels, [-1, 1])

    def test_other_labels_rejected(self):
        with pytest.raises(ParseError, match="binary"):
            parse_libsvm(["3 1:1\n", "1 1:1\n"])

    def test_n_features_override_and_bound(self):
        ds = parse_libsvm(["+1 3:1\n"], n_features=10)
        assert ds.D == 10
        with pytest.raises(ParseError, match="exceeds"):
            parse_libsvm(["+1 11:1\n"], n_features=10)

    def test_round_trip_identity(self):
        rng = np.random.default_rng(0)
        lines = []
        for _ in range(20):
            label = 1 if rng.random() < 0.5 else -1
            cols = np.sort(rng.choice(np.arange(1, 30), size=rng.integers(1, 6),
                                      replace=False))
            feats = " ".join(f"{c}:{round(float(rng.random()), 6)}" for c in cols)
            lines.append(f"{label} {feats}\n")
        a = parse_libsvm(lines, n_features=30)
        b = parse_libsvm(io.StringIO(serialize_libsvm(a)), n_features=30)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert (a.features != b.features).nnz == 0


class TestIdx:
    def test_label_header_and_values(self):
        buf = struct.pack(">II", 0x00000801, 10) + bytes(range(10))
        labels = read_idx(io.BytesIO(buf))
        np.testing.assert_array_equal(labels, np.arange(10))

    def test_image_scaling(self):
        payload = bytes([255, 0, 128, 64])
        buf = struct.pack(">IIII", 0x00000803, 1, 2, 2) + payload
        imgs = read_idx(io.BytesIO(buf))
        assert imgs.shape == (1, 4)
        assert imgs[0, 0] == 1.0
        assert imgs[0, 1] == 0.0

    def test_bad_magic(self):
        with pytest.raises(ParseError, match="magic"):
            read_idx(io.BytesIO(struct.pack(">II", 0x00000999, 1)))

    def test_payload_length_must_match(self):
        buf = struct.pack(">II", 0x00000801, 10) + bytes(range(9))
        with pytest.raises(ParseError, match="payload"):
            read_idx(io.BytesIO(buf))
        buf = struct.pack(">II", 0x00000801, 10) + bytes(range(11))
        with pytest.raises(ParseError, match="payload"):
            read_idx(io.BytesIO(buf))

    def test_write_read_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        imgs = rng.random((5, 4, 4))
        labs = rng.integers(0, 10, size=5)
        write_idx(tmp_path / "imgs", imgs)
        write_idx(tmp_path / "labs", labs)
        r_imgs = read_idx(tmp_path / "imgs")
        r_labs = read_idx(tmp_path / "labs")
        np.testing.assert_array_equal(r_labs, labs)
        expected = (np.round(imgs * 255) / 255.0).reshape(5, 16)
        np.testing.assert_allclose(r_imgs, expected, atol=1e-12)


def _small_trace(n=7, d=2, seed=3):
    target = GaussianTarget(mean=np.zeros(d), cov_diag=np.ones(d))
    cfg = SamplerConfig(
        algorithm="psgld", schedule=ConstantSchedule(0.05),
        total_iters=n * 10 + 30, burn_in=30, thinning=10, seed=seed,
    )
    return run_chain(target, cfg)


class TestTracePersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        trace = _small_trace()
        path = tmp_path / "t.csv"
        write_trace(trace, path)
        back = read_trace(path)
        np.testing.assert_array_equal(back.samples, trace.samples)
        np.testing.assert_array_equal(back.eps, trace.eps)
        assert back.S_T == trace.S_T
        assert back.seed == trace.seed
        assert back.schedule == trace.schedule
        assert back.algorithm == trace.algorithm

    def test_file_shape(self, tmp_path):
        trace = _small_trace(n=7, d=2)
        path = tmp_path / "t.csv"
        write_trace(trace, path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 8  # header + 7 rows
        assert all(len(line.split(",")) == 3 for line in lines[1:])

    def test_empty_trace_valid(self, tmp_path):
        from psgld.samplers import SampleTrace

        empty = SampleTrace(
            samples=np.zeros((0, 3)), eps=np.zeros(0), S_T=0.0, total_iters=10,
            burn_in=0, thinning=1, seed=0, algorithm="sgld", model_name="m",
        )
        path = tmp_path / "e.csv"
        write_trace(empty, path)
        back = read_trace(path)
        assert len(back) == 0 and back.samples.shape[1] == 3

    def test_version_mismatch(self, tmp_path):
        trace = _small_trace()
        path = tmp_path / "t.csv"
        write_trace(trace, path)
        txt = path.read_text().replace("psgld-trace/1", "psgld-trace/9")
        path.write_text(txt)
        with pytest.raises(TraceFormatError, match="format"):
            read_trace(path)

    def test_truncation_detected(self, tmp_path):
        trace = _small_trace()
        path = tmp_path / "t.csv"
        write_trace(trace, path)
        lines = path.read_text().strip().split("\n")
        path.write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(TraceFormatError, match="truncated"):
            read_trace(path)

    def test_rewrite_is_byte_identical(self, tmp_path):
        trace = _small_trace()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace(trace, p1)
        write_trace(read_trace(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()



class TestSynthBlr:
    def test_null_model_is_balanced(self):
        ds = synth_blr(N=4000, D=3, seed=5, true_theta=np.zeros(3))
        share = (ds.labels == 1).mean()
        se = np.sqrt(0.25 / 4000)
        assert abs(share - 0.5) < 3 * se

    def test_same_seed_identical(self):
        a = synth_blr(100, 4, 7, true_theta=np.ones(4))
        b = synth_blr(100, 4, 7, true_theta=np.ones(4))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_strong_signal_recovers_signs(self):
        # near-separable data: posterior mean aligns with the generator
        from psgld.model_api import PriorConfig
        from psgld.models import LogisticRegressionModel
        from psgld.oracle import MhConfig, mh_chain

        theta_star = 10.0 * np.array([1.0, -1.0, 1.0])
        ds = synth_blr(N=300, D=3, seed=11, true_theta=theta_star)
        model = LogisticRegressionModel(ds, PriorConfig(sigma_sq=100.0))
        trace = mh_chain(model, MhConfig(steps=60_000, burn_in=10_000, seed=2))
        mean = trace.samples.mean(axis=0)
        np.testing.assert_array_equal(np.sign(mean), np.sign(theta_star))


class TestSyntheticStandins:
    def test_a9a_shapes_and_determinism(self):
        tr, te = synth_a9a_like(n_train=2000, n_test=500)
        assert tr.D == te.D == 123
        assert tr.N == 2000 and te.N == 500
        assert set(np.unique(tr.labels)) <= {-1, 1}
        tr2, _ = synth_a9a_like(n_train=2000, n_test=500)
        assert (tr.features != tr2.features).nnz == 0

    def test_australian_standardized(self):
        ds = synth_australian_like()
        assert ds.N == 690 and ds.D == 14
        np.testing.assert_allclose(ds.features.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(ds.features.std(axis=0), 1.0, atol=1e-10)

    def test_mnist_like_ranges(self):
        tr, te = synth_mnist_like(n_train=300, n_test=50)
        assert tr.features.shape == (300, 784)
        assert te.features.shape == (50, 784)
        assert tr.labels.min() >= 0 and tr.labels.max() <= 9

    def test_standardize_handles_constant_columns(self):
        X = np.column_stack([np.ones(5), np.arange(5.0)])
        Z = standardize(X)
        np.testing.assert_array_equal(Z[:, 0], np.zeros(5))


class TestRunConfig:
    def test_parse_types_and_comments(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "# comment line\n"
            'model = "gaussian"\n'
            "total_iters = 500  # trailing comment\n"
            "alpha = 0.98\n"
            "gamma_term = true\n"
        )
        cfg = parse_config(p)
        assert cfg == {
            "model": "gaussian",
            "total_iters": 500,
            "alpha": 0.98,
            "gamma_term": True,
        }

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(["bogus = 1\n"])

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(["seed = 1\n", "seed = 2\n"])

    def test_unquoted_string_rejected(self):
        with pytest.raises(ConfigError, match="quoted"):
            parse_config(["model = gaussian\n"])

    def test_missing_dataset_path_rejected(self):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config(['dataset = "/nonexistent/file.libsvm"\n'])

    def test_synth_dataset_spec_allowed(self):
        cfg = parse_config(['dataset = "synth:australian"\n'])
        assert cfg["dataset"] == "synth:australian"
