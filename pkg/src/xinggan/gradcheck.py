"""Finite-difference checks of every differentiable op and of the full
generator objective, all in float64."""

from __future__ import annotations

import zlib

import numpy as np

from . import tensor as T

OP_TOL = 1e-5
END_TO_END_TOL = 1e-4


def rel_err(a, b) -> float:
    """||a - b|| / max(||a||, ||b||); 0 when both vanish."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0.0 else float(np.linalg.norm(a - b) / denom)


def weighted_sum(out: T.Var, seed: int = 7) -> T.Var:
    """Scalar probe sum(out * R) with a fixed random R so every element matters."""
    r = np.random.default_rng(seed).normal(size=out.shape)
    return T.sum_(T.mul(out, T.Var(r.astype(out.dtype))))


def grad_check(build, arrays, eps: float = 1e-6) -> float:
    """Max relative error between backward() and central differences.

    ``build(*vars)`` must return a scalar Var; every array gets a gradient.
    """
    with T.precision(np.float64):
        arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
        leaves = [T.Var(a.copy(), requires_grad=True) for a in arrays]
        T.backward(build(*leaves))
        worst = 0.0
        for i, leaf in enumerate(leaves):
            def f(x, i=i):
                args = [T.Var(x) if j == i else T.Var(arrays[j]) for j in range(len(arrays))]
                return build(*args).item()

            worst = max(worst, rel_err(leaf.grad, T.finite_diff_grad(f, arrays[i], eps)))
        return worst


# name -> (scalar-valued builder, input shapes)
OP_CASES = {
    "add": (lambda a, b: weighted_sum(T.add(a, b)), [(3, 4), (3, 4)]),
    "add_broadcast": (lambda a, b: weighted_sum(T.add(a, b)), [(2, 3, 4), (1, 3, 1)]),
    "sub": (lambda a, b: weighted_sum(T.sub(a, b)), [(3, 4), (3, 4)]),
    "mul": (lambda a, b: weighted_sum(T.mul(a, b)), [(3, 4), (3, 4)]),
    "mul_scalar_param": (lambda a, s: weighted_sum(T.mul(s, a)), [(2, 3), ()]),
    "scale": (lambda a: weighted_sum(T.scale(a, -1.7)), [(5,)]),
    "tanh": (lambda a: weighted_sum(T.tanh(a)), [(4, 4)]),
    "relu": (lambda a: weighted_sum(T.relu(a)), [(4, 4)]),
    "leaky_relu": (lambda a: weighted_sum(T.leaky_relu(a, 0.2)), [(4, 4)]),
    "abs": (lambda a: weighted_sum(T.abs_(a)), [(4, 4)]),
    "sum_axis": (lambda a: weighted_sum(T.sum_(a, axis=1)), [(3, 4, 2)]),
    "mean": (lambda a: T.mean(T.mul(a, a)), [(3, 4)]),
    "bce": (lambda a: T.bce_with_logits(a, 1.0), [(2, 3)]),
    "bce0": (lambda a: T.bce_with_logits(a, 0.0), [(2, 3)]),
    "matmul": (lambda a, b: weighted_sum(T.matmul(a, b)), [(3, 4), (4, 2)]),
    "matmul_batched": (lambda a, b: weighted_sum(T.matmul(a, b)), [(2, 3, 4), (2, 4, 2)]),
    "softmax_rows": (lambda a: weighted_sum(T.softmax_rows(a)), [(4, 5)]),
    "softmax_axis1": (lambda a: weighted_sum(T.softmax(a, axis=1)), [(2, 3, 2, 2)]),
    "reshape": (lambda a: weighted_sum(T.reshape(a, (6, 2))), [(3, 4)]),
    "transpose": (lambda a: weighted_sum(T.transpose(a, (2, 0, 1))), [(2, 3, 4)]),
    "concat": (lambda a, b: weighted_sum(T.concat_channels([a, b])), [(2, 3, 3), (1, 3, 3)]),
    "conv2d": (lambda x, w, b: weighted_sum(T.conv2d(x, w, b, 1, 1)), [(2, 5, 4), (3, 2, 3, 3), (3,)]),
    "conv2d_stride2": (lambda x, w, b: weighted_sum(T.conv2d(x, w, b, 2, 1)),
                       [(2, 2, 6, 4), (3, 2, 3, 3), (3,)]),
    "conv_transpose2d": (lambda x, w, b: weighted_sum(T.conv_transpose2d(x, w, b, 2, 1)),
                         [(2, 3, 2), (2, 3, 4, 4), (3,)]),
    "instance_norm": (lambda x, g, b: weighted_sum(T.instance_norm(x, g, b)), [(2, 3, 3), (2,), (2,)]),
}


def _sa_case(f_i, f_p, wa, wb, wc, alpha):
    from .blocks import SABlockParams, sa_block

    p = SABlockParams(f_i.shape[0])
    p.conv_a.weight, p.conv_b.weight, p.conv_c.weight, p.alpha = wa, wb, wc, alpha
    return weighted_sum(sa_block(f_i, f_p, p))


def _as_case(f_p, f_prev, f_new, wd, we, wh, beta, wm, bm):
    from .blocks import ASBlockParams, as_block

    p = ASBlockParams(f_p.shape[0])
    p.conv_d.weight, p.conv_e.weight, p.conv_h.weight, p.beta = wd, we, wh, beta
    p.conv_merge.weight, p.conv_merge.bias = wm, bm
    return weighted_sum(as_block(f_p, f_prev, f_new, p))


OP_CASES["sa_block"] = (_sa_case, [(3, 2, 2), (3, 2, 2), (3, 3, 1, 1), (3, 3, 1, 1), (3, 3, 1, 1), ()])
OP_CASES["as_block"] = (_as_case, [(2, 2, 2)] * 3 + [(2, 2, 1, 1)] * 3 + [(), (2, 4, 3, 3), (2,)])

_KINKED = ("relu", "leaky_relu", "abs")


def op_inputs(name: str) -> list[np.ndarray]:
    _, shapes = OP_CASES[name]
    r = np.random.default_rng(zlib.crc32(name.encode()))
    arrays = [r.normal(size=s) + (0.0 if len(s) else 0.5) for s in shapes]
    if name in _KINKED:
        arrays = [a + np.sign(a) * 0.05 for a in arrays]  # stay off the kink
    return arrays


def check_op(name: str) -> float:
    return grad_check(OP_CASES[name][0], op_inputs(name))


# -- end to end -------------------------------------------------------------


def _is_gate(name: str, p) -> bool:
    # scalar alpha/beta gates, not instance-norm shifts
    return p.ndim == 0 and name.rsplit(".", 1)[-1] in ("alpha", "beta")


def tiny_problem(seed: int = 3, T_blocks: int = 1, N: int = 2, c: int = 8, h: int = 16, w: int = 8,
                 batch: int = 2, variant: str = "FULL"):
    """Generator, frozen discriminators, extractor and a random batch.
    Call inside a float64 precision context."""
    from .losses import FeatureExtractor
    from .nets import Generator, build_discriminators

    g = Generator(T_blocks, N, c, variant)
    g.initialize(seed)
    r = np.random.default_rng(seed)
    # open the attention gates so the cascade carries gradient
    for name, p in g.named_parameters():
        if _is_gate(name, p):
            p.data = np.asarray(r.uniform(0.3, 0.8))
    d_i, d_p = build_discriminators(8)
    d_i.initialize(seed + 1)
    d_p.initialize(seed + 2)
    d_i.requires_grad_(False)
    d_p.requires_grad_(False)
    batch_data = {
        "source": r.uniform(-1, 1, (batch, 3, h, w)),
        "target": r.uniform(-1, 1, (batch, 3, h, w)),
        "pose_s": r.uniform(0, 1, (batch, 18, h, w)),
        "pose_t": r.uniform(0, 1, (batch, 18, h, w)),
    }
    return g, d_i, d_p, FeatureExtractor(), batch_data


def generator_objective(g, d_i, d_p, fx, b) -> T.Var:
    from .losses import adversarial_term, gan_loss_g, l1_loss, perceptual_loss, total_loss

    src, ps, tgt, pt = (T.Var(b[k]) for k in ("source", "pose_s", "target", "pose_t"))
    fake = g(src, ps, pt).final
    gan = adversarial_term([gan_loss_g(d_i(src, fake)), gan_loss_g(d_p(pt, fake))])
    return total_loss((gan, l1_loss(fake, tgt), perceptual_loss(fake, tgt, fx)))


def end_to_end_error(seed: int = 3, n_params: int = 20, eps: float = 1e-6) -> tuple[float, int]:
    """Relative error over ``n_params`` random scalar generator parameters
    (always including the attention gates) between backward() and central
    differences of the weighted generator objective on a T=1, N=2, c=8,
    16x8 problem."""
    with T.precision(np.float64):
        g, d_i, d_p, fx, b = tiny_problem(seed)
        g.zero_grad()
        T.backward(generator_objective(g, d_i, d_p, fx, b))
        named = list(g.named_parameters())
        r = np.random.default_rng(seed + 100)
        picks = [i for i, (n, p) in enumerate(named) if _is_gate(n, p)]
        others = [i for i in range(len(named)) if i not in picks]
        picks += [int(i) for i in r.choice(others, size=n_params - len(picks), replace=False)]
        analytic, numeric = [], []
        for i in picks:
            p = named[i][1]
            idx = tuple(int(r.integers(0, s)) for s in p.shape)
            orig = p.data[idx]
            vals = []
            for sgn in (1, -1):
                p.data[idx] = orig + sgn * eps
                vals.append(generator_objective(g, d_i, d_p, fx, b).item())
            p.data[idx] = orig
            analytic.append(p.grad[idx])
            numeric.append((vals[0] - vals[1]) / (2 * eps))
        return rel_err(analytic, numeric), len(picks)


def run_all() -> dict[str, tuple[float, float]]:
    """name -> (error, tolerance) for every op plus the end-to-end check."""
    out = {name: (check_op(name), OP_TOL) for name in OP_CASES}
    out["end_to_end"] = (end_to_end_error()[0], END_TO_END_TOL)
    return out
