"""Slow, obviously-correct reference implementations used as test oracles."""

import math

import numpy as np


def conv1x1_loop(x, w, b):
    h, wd, _ = x.shape
    out = np.zeros((h, wd, w.shape[1]))
    for i in range(h):
        for j in range(wd):
            for o in range(w.shape[1]):
                out[i, j, o] = sum(x[i, j, c] * w[c, o] for c in range(w.shape[0])) + b[o]
    return out


def conv_down_loop(x, w, b, stride=2, pad=1):
    h, wd, cin = x.shape
    k = w.shape[0]
    xp = np.zeros((h + 2 * pad, wd + 2 * pad, cin))
    xp[pad:pad + h, pad:pad + wd] = x
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((oh, ow, w.shape[3]))
    for i in range(oh):
        for j in range(ow):
            for o in range(w.shape[3]):
                acc = b[o]
                for di in range(k):
                    for dj in range(k):
                        for c in range(cin):
                            acc += xp[i * stride + di, j * stride + dj, c] * w[di, dj, c, o]
                out[i, j, o] = acc
    return out


def entropy_loop(pixels):
    p = pixels.reshape(-1, pixels.shape[-1])
    hs = []
    for c in range(p.shape[1]):
        counts = {}
        for v in p[:, c]:
            counts[int(v)] = counts.get(int(v), 0) + 1
        n = p.shape[0]
        hs.append(-sum(k / n * math.log(k / n) for k in counts.values()))
    return sum(hs) / len(hs)


def rmse_loop(a, b):
    total, n = 0.0, 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for c in range(a.shape[2]):
                total += (float(a[i, j, c]) - float(b[i, j, c])) ** 2
                n += 1
    return math.sqrt(total / n)


def pearson(u, v):
    u = [float(t) for t in u]
    v = [float(t) for t in v]
    mu, mv = sum(u) / len(u), sum(v) / len(v)
    num = sum((a - mu) * (b - mv) for a, b in zip(u, v))
    du = math.sqrt(sum((a - mu) ** 2 for a in u))
    dv = math.sqrt(sum((b - mv) ** 2 for b in v))
    return num / (du * dv)


def corr_loop(pixels):
    p = pixels.reshape(-1, 3)
    r, g, b = p[:, 0], p[:, 1], p[:, 2]
    return (pearson(r, g) + pearson(r, b) + pearson(b, g)) / 3


def separability_loop(pixels):
    p = pixels.reshape(-1, 3).astype(float)
    n = p.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += math.sqrt(sum((p[i, c] - p[j, c]) ** 2 for c in range(3)))
    return total / (n - 1) ** 2
