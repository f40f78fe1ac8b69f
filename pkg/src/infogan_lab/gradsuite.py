"""Gradient verification harness: every catalogue op, plus the full loss graph.

Each case builds a small random problem, wraps it in a deterministic
scalar loss, and compares analytic gradients against central finite
differences via :func:`infogan_lab.autodiff.grad_check`.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor, grad_check
from .latent import CodeBlock, LatentSpec, sample_latent
from .models import NetConfig, disc_q_forward, gen_forward, init_models
from .objectives import gan_losses, infogan_losses, mi_lower_bound

DEFAULT_STEP = 1e-6


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Tensor:
    w = ad.const(rng.normal(0.0, 1.0, out.shape))
    return ad.reduce_sum(ad.mul(out, w))


def _case_matmul(rng):
    a = Tensor(rng.normal(0, 1, (3, 4)))
    b = Tensor(rng.normal(0, 1, (4, 2)))
    w = rng.normal(0, 1, (3, 2))
    return [a, b], lambda p: ad.reduce_sum(ad.mul(ad.matmul(p[0], p[1]), ad.const(w)))


def _case_add(rng):
    a = Tensor(rng.normal(0, 1, (3, 4)))
    b = Tensor(rng.normal(0, 1, (3, 4)))
    bias = Tensor(rng.normal(0, 1, (4,)))
    w1 = rng.normal(0, 1, (3, 4))
    w2 = rng.normal(0, 1, (3, 4))

    def loss(p):
        full = ad.mul(ad.add(p[0], p[1]), ad.const(w1))
        biased = ad.mul(ad.add(p[0], p[2]), ad.const(w2))
        return ad.add(ad.reduce_sum(full), ad.reduce_sum(biased))

    return [a, b, bias], loss


def _case_mul(rng):
    a = Tensor(rng.normal(0, 1, (3, 4)))
    b = Tensor(rng.normal(0, 1, (3, 4)))
    w = rng.normal(0, 1, (3, 4))
    return [a, b], lambda p: ad.reduce_sum(ad.mul(ad.mul(p[0], p[1]), ad.const(w)))


def _elementwise_case(fn, rng, scale=1.0, shift=0.0):
    x = Tensor(shift + scale * rng.normal(0, 1, (3, 4)))
    w = rng.normal(0, 1, (3, 4))
    return [x], lambda p: ad.reduce_sum(ad.mul(fn(p[0]), ad.const(w)))


def _case_log(rng):
    x = Tensor(np.abs(rng.normal(0, 1, (3, 4))) + 0.5)
    w = rng.normal(0, 1, (3, 4))
    return [x], lambda p: ad.reduce_sum(ad.mul(ad.log(p[0]), ad.const(w)))


def _rowwise_case(fn, rng):
    x = Tensor(2.0 * rng.normal(0, 1, (3, 5)))
    w = rng.normal(0, 1, (3, 5))
    return [x], lambda p: ad.reduce_sum(ad.mul(fn(p[0]), ad.const(w)))


def _case_reduce_mean(rng):
    x = Tensor(rng.normal(0, 1, (3, 4)))
    return [x], lambda p: ad.reduce_mean(p[0])


def _case_reduce_sum(rng):
    x = Tensor(rng.normal(0, 1, (3, 4)))
    return [x], lambda p: ad.reduce_sum(ad.mul(p[0], p[0]))


def _case_reshape(rng):
    x = Tensor(rng.normal(0, 1, (3, 4)))
    w = rng.normal(0, 1, (2, 6))
    return [x], lambda p: ad.reduce_sum(ad.mul(ad.reshape(p[0], (2, 6)), ad.const(w)))


def _case_concat(rng):
    a = Tensor(rng.normal(0, 1, (3, 2)))
    b = Tensor(rng.normal(0, 1, (3, 3)))
    w = rng.normal(0, 1, (3, 5))
    return [a, b], lambda p: ad.reduce_sum(ad.mul(ad.concat([p[0], p[1]], axis=1), ad.const(w)))


def _case_batchnorm(rng, training):
    x = Tensor(rng.normal(0, 1, (6, 4)))
    gamma = Tensor(rng.uniform(0.5, 1.5, (4,)))
    beta = Tensor(rng.normal(0, 0.3, (4,)))
    state = BatchNormState(4)
    state.running_mean = rng.normal(0, 0.5, 4)
    state.running_var = rng.uniform(0.5, 1.5, 4)
    w = rng.normal(0, 1, (6, 4))

    def loss(p):
        out = ad.batchnorm(p[0], p[1], p[2], state, training)
        return ad.reduce_sum(ad.mul(out, ad.const(w)))

    return [x, gamma, beta], loss


def _case_gaussian_reparam(rng):
    mu = Tensor(rng.normal(0, 1, (3, 4)))
    log_sigma = Tensor(0.3 * rng.normal(0, 1, (3, 4)))
    eps = rng.normal(0, 1, (3, 4))
    w = rng.normal(0, 1, (3, 4))
    return [mu, log_sigma], lambda p: ad.reduce_sum(
        ad.mul(ad.gaussian_reparam(p[0], p[1], eps), ad.const(w))
    )


def _case_gaussian_q_li(rng):
    """Gradient through mu, log_sigma AND the reparametrized sample itself."""
    mu = Tensor(rng.normal(0, 1, (3, 2)))
    log_sigma = Tensor(0.3 * rng.normal(0, 1, (3, 2)))
    q_mu = Tensor(rng.normal(0, 1, (3, 2)))
    q_s = Tensor(0.3 * rng.normal(0, 1, (3, 2)))
    eps = rng.normal(0, 1, (3, 2))

    def loss(p):
        c = ad.gaussian_reparam(p[0], p[1], eps)
        shape = c.shape
        diff = ad.add(c, ad.mul(p[2], ad.full(shape, -1.0)))
        sq = ad.mul(diff, diff)
        half_inv_var = ad.mul(ad.exp(ad.mul(p[3], ad.full(shape, -2.0))), ad.full(shape, 0.5))
        elem = ad.add(ad.mul(p[3], ad.full(shape, -1.0)), ad.mul(ad.mul(sq, half_inv_var), ad.full(shape, -1.0)))
        return ad.reduce_mean(elem)

    return [mu, log_sigma, q_mu, q_s], loss


_OP_CASES = {
    "matmul": _case_matmul,
    "add": _case_add,
    "mul": _case_mul,
    "relu": lambda rng: _elementwise_case(ad.relu, rng),
    "lrelu": lambda rng: _elementwise_case(lambda x: ad.lrelu(x, 0.1), rng),
    "tanh": lambda rng: _elementwise_case(ad.tanh, rng),
    "sigmoid": lambda rng: _elementwise_case(ad.sigmoid, rng),
    "exp": lambda rng: _elementwise_case(ad.exp, rng, scale=0.5),
    "log": _case_log,
    "softmax": lambda rng: _rowwise_case(ad.softmax, rng),
    "log_softmax": lambda rng: _rowwise_case(ad.log_softmax, rng),
    "reduce_mean": _case_reduce_mean,
    "reduce_sum": _case_reduce_sum,
    "reshape": _case_reshape,
    "concat": _case_concat,
    "batchnorm_train": lambda rng: _case_batchnorm(rng, True),
    "batchnorm_eval": lambda rng: _case_batchnorm(rng, False),
    "gaussian_reparam": _case_gaussian_reparam,
    "gaussian_q_li": _case_gaussian_q_li,
}


def op_grad_checks(n_seeds: int = 100, step: float = DEFAULT_STEP, base_seed: int = 1234) -> dict[str, float]:
    """Worst relative gradient error per op case over ``n_seeds`` random draws."""
    worst: dict[str, float] = {}
    for name, case in _OP_CASES.items():
        errs = []
        for s in range(n_seeds):
            rng = np.random.default_rng(base_seed + s)
            params, loss = case(rng)
            errs.append(grad_check(loss, params, step))
        worst[name] = max(errs)
    return worst


def full_loss_graph_check(n_seeds: int = 100, step: float = DEFAULT_STEP, base_seed: int = 99) -> float:
    """grad_check over every parameter of a 2-unit model through the whole
    objective (D loss plus generator objective with both information terms)."""
    worst = 0.0
    for s in range(n_seeds):
        rng = np.random.default_rng(base_seed + s)
        spec = LatentSpec(
            blocks=(CodeBlock.categorical(2), CodeBlock.uniform(-1.0, 1.0)),
            noise_dim=2,
        )
        image_dim = 4
        gen_cfg = NetConfig(widths=(spec.gen_input_dim, 2, image_dim))
        dq_cfg = NetConfig(widths=(image_dim, 2), activation="lrelu", q_hidden=2)
        model = init_models(gen_cfg, dq_cfg, spec, rng)
        lat = sample_latent(spec, 3, rng)
        real = rng.uniform(0.0, 1.0, (3, image_dim))

        def loss(_params):
            fake = gen_forward(model, lat, training=True)
            d_fake, q_post = disc_q_forward(model, fake, training=True)
            d_real, _ = disc_q_forward(model, Tensor(real), training=True)
            loss_d, loss_g = gan_losses(d_real, d_fake, "nonsaturating")
            li_disc, li_cont = mi_lower_bound(q_post, lat, spec)
            bundle = infogan_losses(loss_d, loss_g, li_disc, li_cont, 1.0, 0.1)
            return ad.add(bundle.d_objective, bundle.gq_objective)

        params = list(model.params.values())
        worst = max(worst, grad_check(loss, params, step))
    return worst
