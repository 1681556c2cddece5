"""Independent brute-force references used by the tests.

Everything here is written with explicit Python loops and scalar
arithmetic so that it shares no code path with the vectorised library.
"""

import math


def prior_step_reference(s, s_old, m, kind, *, dtau, nu, c=None, flux="linear", speed=1.0, insulated=True):
    """One update of each prior rule on nested lists s[t][h][w][ch]."""
    T = len(s)
    H, W, d = len(s[0]), len(s[0][0]), len(s[0][0][0])
    out = [[[[0.0] * d for _ in range(W)] for _ in range(H)] for _ in range(T)]

    def F(v):
        return speed * v if flux == "linear" else 0.5 * v * v

    for t in range(T):
        tn = (t + 1) % T
        tp = (t - 1) % T
        for h in range(H):
            for w in range(W):
                mt = m[t][h][w] if insulated else 1.0
                for ch in range(d):
                    cur = s[t][h][w][ch]
                    nxt = s[tn][h][w][ch]
                    prv = s[tp][h][w][ch]
                    if insulated:
                        if m[tn][h][w] == 0.0:
                            nxt = cur
                        if m[tp][h][w] == 0.0:
                            prv = cur
                    lap = nxt - 2.0 * cur + prv
                    if kind == "ori":
                        inc = 0.0
                    elif kind == "heat":
                        inc = dtau * nu * lap
                    elif kind == "burgers":
                        inc = -dtau * cur * (nxt - prv) / 2.0
                    elif kind == "conservation":
                        inc = -dtau * (F(nxt) - F(prv)) / 2.0
                    elif kind in ("wave", "elasticity"):
                        inc = (cur - s_old[t][h][w][ch]) + c * lap
                    else:
                        raise ValueError(kind)
                    if mt == 0.0:
                        inc = 0.0
                    out[t][h][w][ch] = cur + inc
    return out


def between_class_variance_exhaustive(values, threshold):
    """Otsu criterion for the split {v <= threshold} / {v > threshold}."""
    lo = [v for v in values if v <= threshold]
    hi = [v for v in values if v > threshold]
    n = len(values)
    if not lo or not hi:
        return 0.0
    m0 = sum(lo) / len(lo)
    m1 = sum(hi) / len(hi)
    return (len(lo) / n) * (len(hi) / n) * (m0 - m1) ** 2


def otsu_exhaustive(values, bins):
    """Scan every interior bin edge; returns (best_edge, best_variance, all (edge, variance) pairs)."""
    vmin, vmax = min(values), max(values)
    width = (vmax - vmin) / bins
    scored = []
    for k in range(1, bins):
        edge = vmin + k * width
        scored.append((edge, between_class_variance_exhaustive(values, edge)))
    best = max(v for _, v in scored)
    return best, scored


def softmax_row(xs):
    top = max(xs)
    e = [math.exp(x - top) for x in xs]
    z = sum(e)
    return [v / z for v in e]


def attention_reference(q_tokens, kv_tokens, wq, wk, wv, scale):
    """Single-frame attention with explicit loops; tokens are lists of d-vectors."""
    d = len(wq)

    def proj(x, w):
        return [sum(x[i] * w[i][j] for i in range(d)) for j in range(d)]

    Q = [proj(x, wq) for x in q_tokens]
    K = [proj(x, wk) for x in kv_tokens]
    V = [proj(x, wv) for x in kv_tokens]
    out = []
    for q in Q:
        logits = [scale * sum(a * b for a, b in zip(q, k)) for k in K]
        p = softmax_row(logits)
        out.append([sum(p[j] * V[j][c] for j in range(len(V))) for c in range(d)])
    return out


def second_difference_norm_mean(frames):
    T = len(frames)
    total = 0.0
    for t in range(1, T - 1):
        total += math.sqrt(sum((a - 2 * b + c) ** 2 for a, b, c in zip(frames[t + 1], frames[t], frames[t - 1])))
    return total / (T - 2)
