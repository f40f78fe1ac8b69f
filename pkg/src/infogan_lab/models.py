"""Generator and shared discriminator/recognition networks.

Everything is a fully connected stack at desk scale. The discriminator
head and the recognition head share one trunk: a single trunk pass feeds
both, so the recognition model adds only its own head's cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, ShapeError, Tensor
from .latent import LatentBatch, LatentSpec, QPosteriorParams

LOG_SIGMA_BOUND = 7.0  # |log sigma| cap before exponentiation

# Gaussian init with variance 0.02. At these fully connected widths this
# keeps layer gains near one; a 0.02 *standard deviation* shrinks
# activations so hard (without batchnorm) that the categorical code race
# never leaves its symmetric saddle.
WEIGHT_STD = 0.1414213562373095


@dataclass(frozen=True)
class NetConfig:
    """Fully connected stack description.

    ``widths`` is the full chain including the input dimension (and, for
    the generator, the output/image dimension). ``q_hidden`` only matters
    for the shared D/Q net: it is the recognition head's hidden width.
    """

    widths: tuple[int, ...]
    activation: str = "relu"  # or "lrelu"
    lrelu_rate: float = 0.1
    batchnorm: bool = False
    q_hidden: int = 64

    def __post_init__(self):
        if any(w < 1 for w in self.widths):
            raise ShapeError(f"net widths must be >= 1, got {self.widths}")
        if self.activation not in ("relu", "lrelu"):
            raise ShapeError(f"activation must be relu or lrelu, got '{self.activation}'")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))


def default_gen_config(spec: LatentSpec, image_dim: int, hidden=(128, 256), batchnorm=False) -> NetConfig:
    return NetConfig(widths=(spec.gen_input_dim, *hidden, image_dim), activation="relu", batchnorm=batchnorm)


def default_dq_config(image_dim: int, hidden=(256, 128), batchnorm=False, q_hidden=64) -> NetConfig:
    return NetConfig(
        widths=(image_dim, *hidden),
        activation="lrelu",
        batchnorm=batchnorm,
        q_hidden=q_hidden,
    )


@dataclass
class ModelPair:
    """Named parameter tensors for G plus the shared trunk and its two heads."""

    spec: LatentSpec
    gen_cfg: NetConfig
    dq_cfg: NetConfig
    params: dict[str, Tensor] = field(default_factory=dict)
    bn_states: dict[str, BatchNormState] = field(default_factory=dict)

    @property
    def image_dim(self) -> int:
        return self.gen_cfg.widths[-1]

    def group(self, prefix: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def gen_params(self) -> dict[str, Tensor]:
        return self.group("gen")

    def trunk_params(self) -> dict[str, Tensor]:
        return self.group("trunk")

    def d_head_params(self) -> dict[str, Tensor]:
        return self.group("d_head")

    def q_head_params(self) -> dict[str, Tensor]:
        return self.group("q_head")


def _add_linear(model: ModelPair, rng, name: str, fan_in: int, fan_out: int) -> None:
    model.params[f"{name}.w"] = Tensor(rng.normal(0.0, WEIGHT_STD, (fan_in, fan_out)))
    model.params[f"{name}.b"] = Tensor(np.zeros(fan_out))


def _add_batchnorm(model: ModelPair, name: str, width: int) -> None:
    model.params[f"{name}.gamma"] = Tensor(np.ones(width))
    model.params[f"{name}.beta"] = Tensor(np.zeros(width))
    model.bn_states[name] = BatchNormState(width)


def init_models(gen_cfg: NetConfig, dq_cfg: NetConfig, spec: LatentSpec, rng: np.random.Generator) -> ModelPair:
    """Build a ModelPair with weights ~ N(0, 0.02) and zero biases.

    Parameter creation order is fixed, so a fixed seed reproduces every
    tensor bitwise.
    """
    if gen_cfg.widths[0] != spec.gen_input_dim:
        raise ShapeError(
            f"generator input width {gen_cfg.widths[0]} != noise+code dim {spec.gen_input_dim}"
        )
    if len(gen_cfg.widths) < 3:
        raise ShapeError("generator needs at least one hidden layer")
    if len(dq_cfg.widths) < 2:
        raise ShapeError("discriminator trunk needs at least one layer")
    if dq_cfg.widths[0] != gen_cfg.widths[-1]:
        raise ShapeError(
            f"trunk input width {dq_cfg.widths[0]} != image dim {gen_cfg.widths[-1]}"
        )

    model = ModelPair(spec=spec, gen_cfg=gen_cfg, dq_cfg=dq_cfg)

    for i in range(len(gen_cfg.widths) - 1):
        _add_linear(model, rng, f"gen.l{i}", gen_cfg.widths[i], gen_cfg.widths[i + 1])
        is_hidden = i < len(gen_cfg.widths) - 2
        if gen_cfg.batchnorm and is_hidden:
            _add_batchnorm(model, f"gen.bn{i}", gen_cfg.widths[i + 1])

    for i in range(len(dq_cfg.widths) - 1):
        _add_linear(model, rng, f"trunk.l{i}", dq_cfg.widths[i], dq_cfg.widths[i + 1])
        # mirror the usual stack: no normalization right after the input layer
        if dq_cfg.batchnorm and i > 0:
            _add_batchnorm(model, f"trunk.bn{i}", dq_cfg.widths[i + 1])

    feat = dq_cfg.widths[-1]
    _add_linear(model, rng, "d_head.out", feat, 1)

    _add_linear(model, rng, "q_head.l0", feat, dq_cfg.q_hidden)
    if dq_cfg.batchnorm:
        _add_batchnorm(model, "q_head.bn0", dq_cfg.q_hidden)
    i_cat = i_cont = 0
    for block in spec.blocks:
        if block.is_discrete:
            _add_linear(model, rng, f"q_head.cat{i_cat}", dq_cfg.q_hidden, block.k)
            i_cat += 1
        else:
            _add_linear(model, rng, f"q_head.cont{i_cont}.mu", dq_cfg.q_hidden, block.dim)
            _add_linear(model, rng, f"q_head.cont{i_cont}.s", dq_cfg.q_hidden, block.dim)
            i_cont += 1
    return model


def _linear(model: ModelPair, name: str, x: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, model.params[f"{name}.w"]), model.params[f"{name}.b"])


def _maybe_bn(model: ModelPair, name: str, x: Tensor, training: bool) -> Tensor:
    state = model.bn_states.get(name)
    if state is None:
        return x
    return ad.batchnorm(x, model.params[f"{name}.gamma"], model.params[f"{name}.beta"], state, training)


def _activate(cfg: NetConfig, x: Tensor) -> Tensor:
    if cfg.activation == "lrelu":
        return ad.lrelu(x, cfg.lrelu_rate)
    return ad.relu(x)


def _clamp(x: Tensor, bound: float) -> Tensor:
    # min(max(x, -b), b) composed from relu: -b + relu(x+b) - relu(x-b)
    width = x.shape[1]
    up = ad.relu(ad.add(x, ad.full((width,), bound)))
    down = ad.relu(ad.add(x, ad.full((width,), -bound)))
    shifted = ad.add(up, ad.mul(down, ad.full(x.shape, -1.0)))
    return ad.add(shifted, ad.full((width,), -bound))


def gen_forward(model: ModelPair, batch: LatentBatch, training: bool = True) -> Tensor:
    """G(z, c): concatenated noise and codes through the stack, sigmoid pixels in (0,1)."""
    if batch.spec.gen_input_dim != model.gen_cfg.widths[0]:
        raise ShapeError(
            f"latent batch input dim {batch.spec.gen_input_dim} != generator input {model.gen_cfg.widths[0]}"
        )
    h = ad.concat([batch.z, batch.c_encoded], axis=1)
    n_layers = len(model.gen_cfg.widths) - 1
    for i in range(n_layers - 1):
        h = _linear(model, f"gen.l{i}", h)
        h = _maybe_bn(model, f"gen.bn{i}", h, training)
        h = _activate(model.gen_cfg, h)
    return ad.sigmoid(_linear(model, f"gen.l{n_layers - 1}", h))


def disc_q_forward(model: ModelPair, x: Tensor, training: bool = True) -> tuple[Tensor, QPosteriorParams]:
    """One shared trunk pass, then the D head (one logit) and the Q head.

    Returns the (B,1) discriminator logit and the recognition posterior
    parameters; log sigma is clamped to +/-7 before any exponentiation.
    """
    if x.shape[1] != model.dq_cfg.widths[0]:
        raise ShapeError(f"input dim {x.shape[1]} != trunk input {model.dq_cfg.widths[0]}")
    h = x
    for i in range(len(model.dq_cfg.widths) - 1):
        h = _linear(model, f"trunk.l{i}", h)
        h = _maybe_bn(model, f"trunk.bn{i}", h, training)
        h = _activate(model.dq_cfg, h)

    d_logit = _linear(model, "d_head.out", h)

    hq = _linear(model, "q_head.l0", h)
    hq = _maybe_bn(model, "q_head.bn0", hq, training)
    hq = ad.lrelu(hq, model.dq_cfg.lrelu_rate)

    q = QPosteriorParams(spec=model.spec)
    i_cat = i_cont = 0
    for block in model.spec.blocks:
        if block.is_discrete:
            q.cat_logits.append(_linear(model, f"q_head.cat{i_cat}", hq))
            i_cat += 1
        else:
            q.cont_mu.append(_linear(model, f"q_head.cont{i_cont}.mu", hq))
            s_raw = _linear(model, f"q_head.cont{i_cont}.s", hq)
            q.cont_log_sigma.append(_clamp(s_raw, LOG_SIGMA_BOUND))
            i_cont += 1
    return d_logit, q
