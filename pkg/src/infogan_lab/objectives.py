"""Adversarial losses and the variational mutual-information lower bound.

The sigmoid-cross-entropy terms are built from a softplus rewrite
(softplus(x) = relu(x) + log(1 + exp(-|x|))), so log(1 - sigmoid(.)) is
never evaluated literally and logits of either sign stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import DomainError, Tensor, UsageError
from .latent import LatentBatch, LatentSpec, QPosteriorParams, entropy, log_q

GAN_MODES = ("minimax", "nonsaturating")


def _softplus(x: Tensor) -> Tensor:
    shape = x.shape
    neg_x = ad.mul(x, ad.full(shape, -1.0))
    abs_x = ad.add(ad.relu(x), ad.relu(neg_x))
    tail = ad.log(ad.add(ad.exp(ad.mul(abs_x, ad.full(shape, -1.0))), ad.ones(shape)))
    return ad.add(ad.relu(x), tail)


def _neg(x: Tensor) -> Tensor:
    return ad.mul(x, ad.full(x.shape, -1.0))


def _scale(x: Tensor, c: float) -> Tensor:
    return ad.mul(x, ad.full(x.shape, c))


def generator_loss(d_fake_logits: Tensor, mode: str = "nonsaturating") -> Tensor:
    """Generator-side loss from fake logits alone (see :func:`gan_losses`)."""
    if mode not in GAN_MODES:
        raise UsageError(f"gan mode must be one of {GAN_MODES}, got '{mode}'")
    if mode == "minimax":
        return _neg(ad.reduce_mean(_softplus(d_fake_logits)))
    return ad.reduce_mean(_softplus(_neg(d_fake_logits)))


def gan_losses(d_real_logits: Tensor, d_fake_logits: Tensor, mode: str = "nonsaturating") -> tuple[Tensor, Tensor]:
    """Discriminator and generator losses from raw logits.

    loss_D = -mean log sigmoid(real) - mean log(1 - sigmoid(fake)).
    loss_G: 'minimax' is mean log(1 - sigmoid(fake)); 'nonsaturating' is
    -mean log sigmoid(fake).
    """
    if mode not in GAN_MODES:
        raise UsageError(f"gan mode must be one of {GAN_MODES}, got '{mode}'")
    loss_d = ad.add(
        ad.reduce_mean(_softplus(_neg(d_real_logits))),
        ad.reduce_mean(_softplus(d_fake_logits)),
    )
    return loss_d, generator_loss(d_fake_logits, mode)


def mi_lower_bound(q_params: QPosteriorParams, batch: LatentBatch, spec: LatentSpec) -> tuple[Tensor, Tensor]:
    """Single-sample Monte-Carlo estimate of the bound, split by code family.

    Per family: batch mean of log Q(c|x) plus that family's analytic
    entropy. Families without blocks report exactly zero.
    """
    lq_disc, lq_cont = log_q(q_params, batch)
    ent = entropy(spec)
    li_disc = ad.const(0.0) if lq_disc is None else ad.add(ad.reduce_mean(lq_disc), ad.const(ent.discrete))
    li_cont = ad.const(0.0) if lq_cont is None else ad.add(ad.reduce_mean(lq_cont), ad.const(ent.continuous))
    return li_disc, li_cont


@dataclass
class LossBundle:
    """Scalar loss terms of one step, plus the combined objectives.

    ``d_objective`` is what the discriminator step minimizes;
    ``gq_objective`` is loss_G - lambda_disc*L_I_disc - lambda_cont*L_I_cont.
    """

    loss_d: Tensor
    loss_g: Tensor
    li_disc: Tensor
    li_cont: Tensor
    lambda_disc: float
    lambda_cont: float
    d_objective: Tensor
    gq_objective: Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "loss_d": float(self.loss_d),
            "loss_g": float(self.loss_g),
            "li_disc": float(self.li_disc),
            "li_cont": float(self.li_cont),
        }


def infogan_losses(
    loss_d: Tensor,
    loss_g: Tensor,
    li_disc: Tensor,
    li_cont: Tensor,
    lambda_disc: float,
    lambda_cont: float,
) -> LossBundle:
    """Combine plain GAN losses with the information terms (lambda >= 0)."""
    if lambda_disc < 0.0 or lambda_cont < 0.0:
        raise UsageError(f"lambda must be >= 0, got disc={lambda_disc}, cont={lambda_cont}")
    gq = ad.add(ad.add(loss_g, _scale(li_disc, -lambda_disc)), _scale(li_cont, -lambda_cont))
    return LossBundle(
        loss_d=loss_d,
        loss_g=loss_g,
        li_disc=li_disc,
        li_cont=li_cont,
        lambda_disc=lambda_disc,
        lambda_cont=lambda_cont,
        d_objective=loss_d,
        gq_objective=gq,
    )


def optimal_discriminator(p_data: float, p_g: float) -> float:
    """Pointwise optimum p_data / (p_data + p_g); test utility only."""
    if p_data < 0.0 or p_g < 0.0:
        raise DomainError(f"densities must be >= 0, got {p_data}, {p_g}")
    if p_data == 0.0 and p_g == 0.0:
        raise DomainError("optimal discriminator undefined where both densities are zero")
    return p_data / (p_data + p_g)
