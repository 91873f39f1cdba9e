"""Crossed non-local attention blocks.

The SA block refines the appearance code using attention computed between
appearance queries and shape keys; the AS block does the mirror-image update
of the shape code and then merges it with the fresh appearance code.

Codes are ``[c, h, w]`` maps or batches ``[B, c, h, w]``.
"""

from __future__ import annotations

from . import tensor as T
from .layers import Conv2d, Module
from .tensor import Parameter, Var


class SABlockParams(Module):
    """1x1 embeddings A, B, C (c -> c, no bias) and the residual gate alpha."""

    def __init__(self, c: int):
        self.conv_a = Conv2d(c, c, 1, bias=False)
        self.conv_b = Conv2d(c, c, 1, bias=False)
        self.conv_c = Conv2d(c, c, 1, bias=False)
        self.alpha = Parameter(())


class ASBlockParams(Module):
    """1x1 embeddings D, E, H, the residual gate beta and the 3x3 merge conv."""

    def __init__(self, c: int):
        self.conv_d = Conv2d(c, c, 1, bias=False)
        self.conv_e = Conv2d(c, c, 1, bias=False)
        self.conv_h = Conv2d(c, c, 1, bias=False)
        self.beta = Parameter(())
        self.conv_merge = Conv2d(2 * c, c, 3, pad=1)


def _flat(x: Var) -> Var:
    # [.., c, h, w] -> [.., c, n]
    return T.reshape(x, x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def _check_same(*codes: Var) -> None:
    ref = codes[0].shape
    for c in codes[1:]:
        if c.shape != ref:
            raise ValueError(f"feature code shapes differ: {ref} vs {c.shape}")


def correlation_matrix(query: Var, key: Var) -> Var:
    """Row-stochastic [n, n] affinities; entry (j, i) = softmax_i(key_i . query_j).

    ``query`` and ``key`` are already-embedded codes of equal shape.
    """
    _check_same(query, key)
    q = _flat(query)
    k = _flat(key)
    axes = tuple(range(q.ndim - 2)) + (q.ndim - 1, q.ndim - 2)
    logits = T.matmul(T.transpose(q, axes), k)
    return T.softmax(logits, axis=-1)


def _attend(values: Var, corr: Var, like: Var) -> Var:
    # column j of the result is sum_i corr[j, i] * values[:, i]
    v = _flat(values)
    axes = tuple(range(corr.ndim - 2)) + (corr.ndim - 1, corr.ndim - 2)
    out = T.matmul(v, T.transpose(corr, axes))
    return T.reshape(out, like.shape)


def sa_block(f_i: Var, f_p: Var, params: SABlockParams, return_attention: bool = False):
    """Refine the appearance code under guidance of the shape code."""
    _check_same(f_i, f_p)
    p = correlation_matrix(params.conv_c(f_i), params.conv_b(f_p))
    attended = _attend(params.conv_a(f_i), p, f_i)
    out = T.add(T.mul(params.alpha, attended), f_i)
    return (out, p) if return_attention else out


def as_block(f_p: Var, f_i_prev: Var, f_i_new: Var, params: ASBlockParams,
             return_premerge: bool = False):
    """Refine the shape code under guidance of the previous appearance code,
    then merge it with the freshly refined appearance code."""
    _check_same(f_p, f_i_prev, f_i_new)
    q = correlation_matrix(params.conv_h(f_p), params.conv_e(f_i_prev))
    attended = _attend(params.conv_d(f_p), q, f_p)
    pre = T.add(T.mul(params.beta, attended), f_p)
    out = params.conv_merge(T.concat_channels([pre, f_i_new]))
    return (out, pre) if return_premerge else out
