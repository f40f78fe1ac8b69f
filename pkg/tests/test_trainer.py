"""Adam updates, step isolation, determinism, config parsing, metrics CSV."""

import hashlib
import math

import numpy as np
import pytest

from infogan_lab.autodiff import Tensor
from infogan_lab.config import ConfigError, TrainingConfig, parse_config, render_config
from infogan_lab.latent import CodeBlock
from infogan_lab.trainer import (
    AdamState,
    MetricsTrace,
    TrainingError,
    adam_step,
    rng_streams,
    train_run,
    train_step,
)


def tiny_cfg(tmp_path, **kw):
    defaults = dict(
        seed=11,
        iterations=8,
        batch_size=8,
        log_every=2,
        toy_samples=256,
        gen_layers=(16, 24),
        trunk_layers=(24, 16),
        q_hidden=8,
        noise_dim=4,
        checkpoint_out=str(tmp_path / "ckpt.igan"),
        metrics_out=str(tmp_path / "metrics.csv"),
    )
    defaults.update(kw)
    return TrainingConfig(**defaults)


class TestAdam:
    def test_first_step_closed_form(self):
        p = {"w": Tensor([0.0])}
        st = {"w": AdamState((1,))}
        adam_step(p, {"w": np.array([0.5])}, st, lr=1e-3, beta1=0.5, beta2=0.999, epsilon=1e-8)
        # m_hat = g, sqrt(v_hat) = |g| on the first step
        expected = -1e-3 * 0.5 / (0.5 + 1e-8)
        assert abs(p["w"].data[0] - expected) < 1e-18
        assert abs(p["w"].data[0] - (-9.99999980e-4)) < 1e-12

    def test_zero_gradient_keeps_params(self):
        p = {"w": Tensor([1.0, -2.0])}
        st = {"w": AdamState((2,))}
        for _ in range(5):
            adam_step(p, {"w": np.zeros(2)}, st, 1e-2, 0.9, 0.999, 1e-8)
        np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])

    def test_descends_quadratic(self):
        # independent scalar reference: 100 steps on f(x)=x^2 from 1.0
        p = {"w": Tensor([1.0])}
        st = {"w": AdamState((1,))}
        for _ in range(100):
            g = 2.0 * p["w"].data
            adam_step(p, {"w": g}, st, 1e-2, 0.9, 0.999, 1e-8)
        assert abs(p["w"].data[0]) < 0.5

    def test_matches_independent_scalar_recurrence(self):
        rng = np.random.default_rng(3)
        theta, m, v = 0.3, 0.0, 0.0
        p = {"w": Tensor([theta])}
        st = {"w": AdamState((1,))}
        lr, b1, b2, eps = 2e-3, 0.5, 0.999, 1e-8
        for t in range(1, 1001):
            g = float(rng.normal(0, 1))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
            adam_step(p, {"w": np.array([g])}, st, lr, b1, b2, eps)
            assert abs(p["w"].data[0] - theta) < 1e-12

    def test_nan_gradient_names_parameter(self):
        p = {"gen.l0.w": Tensor([1.0])}
        st = {"gen.l0.w": AdamState((1,))}
        with pytest.raises(TrainingError, match="gen.l0.w"):
            adam_step(p, {"gen.l0.w": np.array([np.nan])}, st, 1e-3, 0.9, 0.999, 1e-8)


def _param_hashes(model, prefix):
    out = {}
    for name, t in model.params.items():
        if name.startswith(prefix):
            out[name] = hashlib.sha256(t.data.tobytes()).hexdigest()
    return out


class TestTrainStep:
    def test_step_isolation_by_hashing(self, tmp_path):
        from infogan_lab.data_io import synth_templates
        from infogan_lab.models import init_models
        from infogan_lab.trainer import d_step, gq_step

        cfg = tiny_cfg(tmp_path)
        rngs = rng_streams(cfg.seed)
        ds = synth_templates(cfg.toy_templates, cfg.toy_samples, cfg.toy_noise_sigma, rngs["dataset"])
        gen_cfg, dq_cfg = cfg.net_configs()
        model = init_models(gen_cfg, dq_cfg, cfg.latent_spec(), rngs["init"])
        states = {n: AdamState(t.shape) for n, t in model.params.items()}

        gen_before = _param_hashes(model, "gen")
        q_before = _param_hashes(model, "q_head")
        loss_d = d_step(model, ds.images[:8], cfg, rngs["latent"], states)
        # the D step never modifies gen or q_head parameters
        assert _param_hashes(model, "gen") == gen_before
        assert _param_hashes(model, "q_head") == q_before

        d_before = _param_hashes(model, "d_head")
        gq_step(model, loss_d, cfg, 8, rngs["latent"], states)
        # the G/Q step never modifies d_head parameters
        assert _param_hashes(model, "d_head") == d_before
        assert _param_hashes(model, "gen") != gen_before
        assert _param_hashes(model, "q_head") != q_before

    def test_q_head_moves_with_zero_lambda(self, tmp_path):
        from infogan_lab.data_io import synth_templates
        from infogan_lab.models import init_models

        cfg = tiny_cfg(tmp_path, lambda_disc=0.0, lambda_cont=0.0)
        rngs = rng_streams(cfg.seed)
        ds = synth_templates(cfg.toy_templates, cfg.toy_samples, cfg.toy_noise_sigma, rngs["dataset"])
        gen_cfg, dq_cfg = cfg.net_configs()
        model = init_models(gen_cfg, dq_cfg, cfg.latent_spec(), rngs["init"])
        states = {n: AdamState(t.shape) for n, t in model.params.items()}
        before = _param_hashes(model, "q_head")
        train_step(model, ds.images[:8], cfg, rngs["latent"], states)
        assert _param_hashes(model, "q_head") != before

    def test_gen_gradient_nonzero(self, tmp_path):
        from infogan_lab.data_io import synth_templates
        from infogan_lab.models import init_models

        cfg = tiny_cfg(tmp_path)
        rngs = rng_streams(cfg.seed)
        ds = synth_templates(cfg.toy_templates, cfg.toy_samples, cfg.toy_noise_sigma, rngs["dataset"])
        gen_cfg, dq_cfg = cfg.net_configs()
        model = init_models(gen_cfg, dq_cfg, cfg.latent_spec(), rngs["init"])
        states = {n: AdamState(t.shape) for n, t in model.params.items()}
        before = {n: t.data.copy() for n, t in model.gen_params().items()}
        train_step(model, ds.images[:8], cfg, rngs["latent"], states)
        moved = sum(np.any(model.params[n].data != before[n]) for n in before)
        assert moved == len(before)


class TestTrainRun:
    def test_deterministic_trace_and_files(self, tmp_path):
        cfg_a = tiny_cfg(tmp_path, checkpoint_out=str(tmp_path / "a.igan"), metrics_out=str(tmp_path / "a.csv"))
        _, trace_a = train_run(cfg_a)
        cfg_b = tiny_cfg(tmp_path, checkpoint_out=str(tmp_path / "b.igan"), metrics_out=str(tmp_path / "b.csv"))
        _, trace_b = train_run(cfg_b)
        assert trace_a.rows == trace_b.rows
        a_csv = open(tmp_path / "a.csv", "rb").read()
        b_csv = open(tmp_path / "b.csv", "rb").read()
        assert a_csv == b_csv

    def test_logs_at_requested_cadence(self, tmp_path):
        cfg = tiny_cfg(tmp_path, iterations=7, log_every=3)
        _, trace = train_run(cfg)
        assert trace.column("iter").tolist() == [3, 6, 7]

    def test_missing_mnist_gives_io_error_with_hint(self, tmp_path):
        cfg = tiny_cfg(
            tmp_path,
            dataset="mnist",
            batchnorm=False,
            mnist_images=str(tmp_path / "nope-images"),
            mnist_labels=str(tmp_path / "nope-labels"),
        )
        with pytest.raises(TrainingError, match="mnist_images"):
            train_run(cfg)

    def test_mnist_pipeline_on_synthesized_idx(self, tmp_path):
        # exercises the full 28x28 path (loader, subset, batchnorm nets, classifier)
        from infogan_lab.data_io import load_mnist_idx, write_idx_pair
        from infogan_lab.evaluate import categorical_classifier_eval
        from infogan_lab.latent import CodeBlock

        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, (64, 28, 28)).astype(np.uint8)
        labels = rng.integers(0, 10, 64).astype(np.uint8)
        ip, lp = str(tmp_path / "imgs.idx"), str(tmp_path / "lbls.idx")
        write_idx_pair(images, labels, ip, lp)
        cfg = tiny_cfg(
            tmp_path,
            dataset="mnist",
            iterations=3,
            noise_dim=8,
            codes=(CodeBlock.categorical(10), CodeBlock.uniform(-1, 1), CodeBlock.uniform(-1, 1)),
            mnist_images=ip,
            mnist_labels=lp,
            mnist_subset=48,
        )
        assert cfg.batchnorm is True  # the documented MNIST default
        model, trace = train_run(cfg)
        assert len(trace.rows) >= 1
        ds = load_mnist_idx(ip, lp)
        err, assignment = categorical_classifier_eval(model, ds, 0)
        assert 0.0 <= err <= 1.0 and len(assignment) == 10


class TestMetricsTrace:
    def test_csv_round_trip_full_precision(self, tmp_path):
        trace = MetricsTrace()
        trace.append(1, 1 / 3, -2 / 7, 0.1234567890123456789, -1e-17)
        trace.append(50, 2.0, 3.0, 4.0, 5.0)
        path = str(tmp_path / "m.csv")
        trace.to_csv(path)
        back = MetricsTrace.from_csv(path)
        assert back.rows == trace.rows

    def test_header_format(self, tmp_path):
        trace = MetricsTrace()
        trace.append(1, 0.0, 0.0, 0.0, 0.0)
        path = str(tmp_path / "m.csv")
        trace.to_csv(path)
        assert open(path).readline().strip() == "iter,loss_d,loss_g,li_disc,li_cont"

    def test_monotone_iterations_enforced(self):
        trace = MetricsTrace()
        trace.append(5, 0, 0, 0, 0)
        with pytest.raises(TrainingError):
            trace.append(5, 0, 0, 0, 0)

    def test_nonfinite_rejected(self):
        trace = MetricsTrace()
        with pytest.raises(TrainingError):
            trace.append(1, float("nan"), 0, 0, 0)


class TestConfig:
    def test_defaults_match_documented_values(self):
        cfg = TrainingConfig()
        assert cfg.lr_d == 2e-4 and cfg.lr_g == 1e-3
        assert cfg.beta1 == 0.5 and cfg.beta2 == 0.999
        assert cfg.lambda_disc == 1.0 and cfg.lambda_cont == 0.1
        assert cfg.gan_mode == "nonsaturating"

    def test_batchnorm_default_depends_on_dataset(self):
        assert TrainingConfig(dataset="mnist").batchnorm is True

    def test_parse_render_round_trip(self):
        cfg = TrainingConfig(
            seed=7,
            codes=(CodeBlock.categorical(10), CodeBlock.uniform(-1, 1), CodeBlock.uniform(-1, 1)),
            noise_dim=62,
            dataset="toy",
            lambda_cont=0.05,
        )
        assert parse_config(render_config(cfg)) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("momentum = 0.9\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config("# a comment\n\nseed = 3\n")
        assert cfg.seed == 3

    def test_code_lines_accumulate_in_order(self):
        cfg = parse_config("code = cat:10\ncode = unif:-1:1\ncode = unif:-1:1\n")
        kinds = [b.kind for b in cfg.codes]
        assert kinds == ["categorical", "uniform", "uniform"]

    def test_invalid_values_rejected(self):
        for text in ("batch_size = 1\n", "lr_d = 0\n", "beta1 = 1.0\n", "gan_mode = foo\n", "lambda_disc = -1\n"):
            with pytest.raises(ConfigError):
                parse_config(text)

    def test_empty_config_is_valid(self):
        assert parse_config("") == TrainingConfig()


def test_rng_streams_are_independent_and_stable():
    a = rng_streams(123)
    b = rng_streams(123)
    for name in ("init", "dataset", "batches", "latent"):
        np.testing.assert_array_equal(a[name].random(5), b[name].random(5))
    c = rng_streams(124)
    assert not np.allclose(rng_streams(123)["init"].random(5), c["init"].random(5))
