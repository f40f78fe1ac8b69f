"""Adam optimization and the alternating minimax training loop.

Gradient routing per iteration:

  1. D step    : loss_D updates the trunk and the D head (rate lr_d).
  2. G/Q step  : on a fresh latent batch, the generator is updated on
                 loss_G - lambda_disc*L_I_disc - lambda_cont*L_I_cont
                 (rate lr_g); the trunk and Q head are updated to maximize
                 L_I itself (rate lr_d), independent of lambda, so the
                 recognition model keeps fitting the codes even in the
                 lambda=0 baseline where the generator gets no code
                 incentive.

All randomness comes from one seed, split into four named PCG64 streams
(model init, dataset synthesis, minibatch indices, latent draws), so a run
is bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .config import TrainingConfig
from .data_io import Dataset, load_mnist_idx, save_checkpoint, synth_templates
from .latent import sample_latent
from .models import ModelPair, disc_q_forward, gen_forward, init_models
from .objectives import LossBundle, gan_losses, generator_loss, infogan_losses, mi_lower_bound

STREAM_NAMES = ("init", "dataset", "batches", "latent")


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or gradient, missing data, ...)."""


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent PCG64 streams derived from one seed, one per purpose."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(STREAM_NAMES, children)}


class AdamState:
    """First/second moment estimates and step count for one parameter."""

    __slots__ = ("m", "v", "t")

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    states: dict[str, AdamState],
    lr: float,
    beta1: float,
    beta2: float,
    epsilon: float,
) -> tuple[dict[str, Tensor], dict[str, AdamState]]:
    """In-place Adam update: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)."""
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter '{name}'")
        st = states[name]
        st.t += 1
        st.m = beta1 * st.m + (1.0 - beta1) * g
        st.v = beta2 * st.v + (1.0 - beta2) * g * g
        m_hat = st.m / (1.0 - beta1**st.t)
        v_hat = st.v / (1.0 - beta2**st.t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + epsilon)
    return params, states


@dataclass
class MetricsTrace:
    """Per-logged-iteration loss record; the bound-over-iterations artifact."""

    rows: list[tuple[int, float, float, float, float]] = field(default_factory=list)

    CSV_HEADER = "iter,loss_d,loss_g,li_disc,li_cont"

    def append(self, iteration: int, loss_d: float, loss_g: float, li_disc: float, li_cont: float) -> None:
        if self.rows and iteration <= self.rows[-1][0]:
            raise TrainingError(f"iterations must be strictly increasing (got {iteration})")
        values = (loss_d, loss_g, li_disc, li_cont)
        if not all(np.isfinite(v) for v in values):
            raise TrainingError(f"non-finite metric at iteration {iteration}: {values}")
        self.rows.append((iteration, *values))

    def column(self, name: str) -> np.ndarray:
        i = ("iter", "loss_d", "loss_g", "li_disc", "li_cont").index(name)
        return np.array([row[i] for row in self.rows])

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.CSV_HEADER + "\n")
            for it, *vals in self.rows:
                f.write(str(it) + "," + ",".join(format(v, ".17g") for v in vals) + "\n")

    @staticmethod
    def from_csv(path: str) -> "MetricsTrace":
        trace = MetricsTrace()
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip()
            if header != MetricsTrace.CSV_HEADER:
                raise TrainingError(f"unexpected metrics header '{header}'")
            for line in f:
                it, *vals = line.strip().split(",")
                trace.append(int(it), *(float(v) for v in vals))
        return trace


def _param_groups(model: ModelPair) -> tuple[dict, dict, dict]:
    d_side = {**model.trunk_params(), **model.d_head_params()}
    gen = model.gen_params()
    q_side = {**model.trunk_params(), **model.q_head_params()}
    return d_side, gen, q_side


def d_step(model: ModelPair, real_images: np.ndarray, cfg: TrainingConfig, latent_rng, adam_states) -> Tensor:
    """Discriminator update: loss_D moves the trunk and D head only."""
    d_side, _, _ = _param_groups(model)
    # fakes for the D step need no generator gradient: keep them off the tape
    lat = sample_latent(model.spec, real_images.shape[0], latent_rng)
    fake = gen_forward(model, lat, training=True)
    with Tape() as tape:
        for p in d_side.values():
            tape.watch(p)
        d_real, _ = disc_q_forward(model, Tensor(real_images), training=True)
        d_fake, _ = disc_q_forward(model, fake, training=True)
        loss_d, _ = gan_losses(d_real, d_fake, cfg.gan_mode)
        tape.backward(loss_d)
        d_grads = {name: tape.grad(p).data for name, p in d_side.items()}
    adam_step(d_side, d_grads, adam_states, cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_epsilon)
    return loss_d


def gq_step(model: ModelPair, loss_d: Tensor, cfg: TrainingConfig, batch: int, latent_rng, adam_states) -> LossBundle:
    """Generator/recognition update on a fresh latent sample.

    The generator descends loss_G - lambda*L_I (rate lr_g); the trunk and Q
    head ascend L_I itself (rate lr_d). The D head is untouched.
    """
    _, gen, q_side = _param_groups(model)
    with Tape() as tape:
        for p in gen.values():
            tape.watch(p)
        for p in q_side.values():
            tape.watch(p)
        lat = sample_latent(model.spec, batch, latent_rng)
        fake = gen_forward(model, lat, training=True)
        d_fake, q_post = disc_q_forward(model, fake, training=True)
        loss_g = generator_loss(d_fake, cfg.gan_mode)
        li_disc, li_cont = mi_lower_bound(q_post, lat, model.spec)
        bundle = infogan_losses(loss_d, loss_g, li_disc, li_cont, cfg.lambda_disc, cfg.lambda_cont)
        tape.backward(bundle.gq_objective)
        gen_grads = {name: tape.grad(p).data for name, p in gen.items()}
        li_total = ad.add(li_disc, li_cont)
        tape.backward(li_total)
        q_grads = {name: -tape.grad(p).data for name, p in q_side.items()}
    adam_step(gen, gen_grads, adam_states, cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_epsilon)
    adam_step(q_side, q_grads, adam_states, cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_epsilon)
    return bundle


def train_step(
    model: ModelPair,
    real_images: np.ndarray,
    cfg: TrainingConfig,
    latent_rng: np.random.Generator,
    adam_states: dict[str, AdamState],
    iteration: int | None = None,
) -> LossBundle:
    """One D update then one G/Q update; returns the losses measured at step time."""
    loss_d = d_step(model, real_images, cfg, latent_rng, adam_states)
    bundle = gq_step(model, loss_d, cfg, real_images.shape[0], latent_rng, adam_states)
    values = bundle.as_floats()
    if not all(np.isfinite(v) for v in values.values()):
        where = f" at iteration {iteration}" if iteration is not None else ""
        raise TrainingError(f"non-finite loss{where}: {values}")
    return bundle


def build_dataset(cfg: TrainingConfig, rng: np.random.Generator) -> Dataset:
    if cfg.dataset == "toy":
        return synth_templates(cfg.toy_templates, cfg.toy_samples, cfg.toy_noise_sigma, rng)
    try:
        ds = load_mnist_idx(cfg.mnist_images, cfg.mnist_labels)
    except FileNotFoundError as err:
        raise TrainingError(
            f"MNIST files not found ({err}); download the IDX files and point "
            "mnist_images / mnist_labels at them"
        ) from err
    return Dataset(
        images=ds.images[: cfg.mnist_subset],
        labels=ds.labels[: cfg.mnist_subset] if ds.labels is not None else None,
        dims=ds.dims,
        provenance=ds.provenance + f"[:{cfg.mnist_subset}]",
    )


def train_run(cfg: TrainingConfig) -> tuple[ModelPair, MetricsTrace]:
    """Full training per config; writes the metrics CSV and final checkpoint."""
    rngs = rng_streams(cfg.seed)
    ds = build_dataset(cfg, rngs["dataset"])
    if ds.dims != cfg.image_dims:
        raise TrainingError(f"dataset dims {ds.dims} do not match config dims {cfg.image_dims}")
    gen_cfg, dq_cfg = cfg.net_configs()
    model = init_models(gen_cfg, dq_cfg, cfg.latent_spec(), rngs["init"])
    adam_states = {name: AdamState(t.shape) for name, t in model.params.items()}

    trace = MetricsTrace()
    for i in range(1, cfg.iterations + 1):
        idx = rngs["batches"].integers(0, len(ds), size=cfg.batch_size)
        bundle = train_step(model, ds.images[idx], cfg, rngs["latent"], adam_states, iteration=i)
        if i % cfg.log_every == 0 or i == cfg.iterations:
            v = bundle.as_floats()
            trace.append(i, v["loss_d"], v["loss_g"], v["li_disc"], v["li_cont"])

    trace.to_csv(cfg.metrics_out)
    save_checkpoint(model, cfg, cfg.checkpoint_out)
    return model, trace
