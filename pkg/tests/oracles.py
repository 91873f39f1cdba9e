"""Independent scalar-loop reference implementations.

Nothing here imports the package's tensor code; every formula is spelled out
with plain Python loops over float64 values.
"""

import math

import numpy as np


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def conv2d_loop(x, w, b, stride, pad):
    cin, h, wd = x.shape
    cout, cin2, k, _ = w.shape
    assert cin == cin2
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0 if b is None else float(b[o])
                for c in range(cin):
                    for u in range(k):
                        for v in range(k):
                            y = i * stride + u - pad
                            xx = j * stride + v - pad
                            if 0 <= y < h and 0 <= xx < wd:
                                acc += float(w[o, c, u, v]) * float(x[c, y, xx])
                out[o, i, j] = acc
    return out


def conv_transpose2d_loop(x, w, b, stride, pad):
    cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    ho = (h - 1) * stride - 2 * pad + k
    wo = (wd - 1) * stride - 2 * pad + k
    out = np.zeros((cout, ho, wo))
    for c in range(cin):
        for i in range(h):
            for j in range(wd):
                for o in range(cout):
                    for u in range(k):
                        for v in range(k):
                            y = i * stride + u - pad
                            xx = j * stride + v - pad
                            if 0 <= y < ho and 0 <= xx < wo:
                                out[o, y, xx] += float(x[c, i, j]) * float(w[c, o, u, v])
    if b is not None:
        for o in range(cout):
            out[o] += float(b[o])
    return out


def matmul_loop(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += float(a[i, t]) * float(b[t, j])
            out[i, j] = s
    return out


def softmax_rows_loop(m):
    out = np.zeros(m.shape)
    for r in range(m.shape[0]):
        row = [float(v) for v in m[r]]
        top = max(row)
        ex = [math.exp(v - top) for v in row]
        s = sum(ex)
        for c in range(len(row)):
            out[r, c] = ex[c] / s
    return out


def embed_loop(w, x):
    """1x1 conv without bias, returning a c x n matrix over flattened positions."""
    c_out = w.shape[0]
    c_in, h, wd = x.shape
    n = h * wd
    flat = x.reshape(c_in, n)
    out = np.zeros((c_out, n))
    for o in range(c_out):
        for p in range(n):
            out[o, p] = sum(float(w[o, i, 0, 0]) * float(flat[i, p]) for i in range(c_in))
    return out


def correlation_loop(query, key):
    """query, key: c x n embedded codes. p[j, i] = exp(key_i . query_j) / sum_i(...)."""
    c, n = query.shape
    p = np.zeros((n, n))
    for j in range(n):
        logits = [sum(float(key[k, i]) * float(query[k, j]) for k in range(c)) for i in range(n)]
        top = max(logits)
        ex = [math.exp(v - top) for v in logits]
        s = sum(ex)
        for i in range(n):
            p[j, i] = ex[i] / s
    return p


def sa_loop(f_i, f_p, wa, wb, wc, alpha):
    c, h, w = f_i.shape
    n = h * w
    A = embed_loop(wa, f_i)
    B = embed_loop(wb, f_p)
    C = embed_loop(wc, f_i)
    P = correlation_loop(C, B)
    base = f_i.reshape(c, n)
    out = np.zeros((c, n))
    for k in range(c):
        for j in range(n):
            out[k, j] = alpha * sum(P[j, i] * A[k, i] for i in range(n)) + float(base[k, j])
    return out.reshape(c, h, w)


def as_loop(f_p, f_i_prev, f_i_new, wd, we, wh, beta, w_merge, b_merge):
    c, h, w = f_p.shape
    n = h * w
    D = embed_loop(wd, f_p)
    E = embed_loop(we, f_i_prev)
    H = embed_loop(wh, f_p)
    Q = correlation_loop(H, E)
    base = f_p.reshape(c, n)
    pre = np.zeros((c, n))
    for k in range(c):
        for j in range(n):
            pre[k, j] = beta * sum(Q[j, i] * D[k, i] for i in range(n)) + float(base[k, j])
    stacked = np.concatenate([pre.reshape(c, h, w), f_i_new], axis=0)
    return conv2d_loop(stacked, w_merge, b_merge, 1, 1), pre.reshape(c, h, w)


def bce_loop(logits, target):
    vals = []
    for x in np.asarray(logits, dtype=np.float64).reshape(-1):
        p = 1.0 / (1.0 + math.exp(-x))
        vals.append(-(target * math.log(p) + (1 - target) * math.log(1 - p)))
    return sum(vals) / len(vals)


def l1_loop(a, b):
    fa = np.asarray(a, dtype=np.float64).reshape(-1)
    fb = np.asarray(b, dtype=np.float64).reshape(-1)
    return sum(abs(float(x) - float(y)) for x, y in zip(fa, fb)) / len(fa)


def ssim_direct(a, b, win=11, sigma=1.5, k1=0.01, k2=0.03, L=1.0):
    """Per-window SSIM from explicit weighted sums; a, b are [C,H,W] in [0, L]."""
    r = [i - (win - 1) / 2.0 for i in range(win)]
    g1 = [math.exp(-(t * t) / (2 * sigma * sigma)) for t in r]
    s = sum(g1)
    g1 = [v / s for v in g1]
    wgt = np.outer(g1, g1)
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    chans = []
    for ch in range(a.shape[0]):
        vals = []
        for y in range(a.shape[1] - win + 1):
            for x in range(a.shape[2] - win + 1):
                pa = a[ch, y:y + win, x:x + win]
                pb = b[ch, y:y + win, x:x + win]
                ma = float((wgt * pa).sum())
                mb = float((wgt * pb).sum())
                va = float((wgt * (pa - ma) ** 2).sum())
                vb = float((wgt * (pb - mb) ** 2).sum())
                cov = float((wgt * (pa - ma) * (pb - mb)).sum())
                vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
        chans.append(sum(vals) / len(vals))
    return sum(chans) / len(chans)
