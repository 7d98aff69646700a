"""Visualisation quality metrics: entropy, RMSE, channel correlation, separability.

All metrics work on byte-range RGB images (values 0..255).
"""

import hashlib
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateError, DimensionError

EXACT_LIMIT = 65536

CORRECTIONS = [
    "rmse: squared per-pixel differences under the root",
    "corr: square root of the variance product in the denominator",
]


def _pixels(img):
    p = getattr(img, "pixels", img)
    p = np.asarray(p)
    if getattr(img, "range", "byte") != "byte":
        raise ValueError("metrics expect byte-range images")
    return p


def entropy(img):
    """Mean over channels of ``-sum p ln p`` of the 256-level histogram (nats)."""
    p = _pixels(img)
    if p.ndim == 2:
        p = p[..., None]
    chans = p.reshape(-1, p.shape[-1]).astype(np.int64)
    if chans.size and (chans.min() < 0 or chans.max() > 255):
        raise ValueError("entropy expects values in 0..255")
    hs = []
    for c in range(chans.shape[1]):
        counts = np.bincount(chans[:, c], minlength=256)
        prob = counts[counts > 0] / chans.shape[0]
        hs.append(float(-(prob * np.log(prob)).sum()))
    return float(np.mean(hs))


def rmse(vis, truth):
    """Root mean squared difference over all pixels and channels."""
    a = _pixels(vis).astype(np.float64)
    b = _pixels(truth).astype(np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"rmse: image shapes {a.shape} and {b.shape} differ")
    return float(np.sqrt(np.mean((a - b) ** 2)))


CORR_PAIRS = (("R", "G"), ("R", "B"), ("B", "G"))
_CH = {"R": 0, "G": 1, "B": 2}


def corr_pairs(img):
    p = _pixels(img).reshape(-1, 3).astype(np.float64)
    centered = p - p.mean(axis=0)
    ss = (centered ** 2).sum(axis=0)
    for name, c in _CH.items():
        if ss[c] == 0.0:
            raise DegenerateError(f"corr: channel {name} is constant, correlation undefined")
    out = {}
    for a, b in CORR_PAIRS:
        i, j = _CH[a], _CH[b]
        out[a + b] = float((centered[:, i] * centered[:, j]).sum() / math.sqrt(ss[i] * ss[j]))
    return out


def corr(img):
    """Mean Pearson correlation of the (R,G), (R,B) and (B,G) channel pairs."""
    return float(np.mean(list(corr_pairs(img).values())))


def separability(img, mode="exact", n=100_000, seed=0, block=1024):
    """Average pairwise RGB distance, ``sum_{x != y} d(x, y) / (N - 1)^2``.

    ``mode="exact"`` sums all ordered pairs (quadratic, capped at 65536
    pixels); ``mode="sampled"`` averages ``n`` uniformly drawn ordered pairs
    of distinct pixels and rescales by ``N / (N - 1)`` to the same
    normalisation.
    """
    p = _pixels(img).reshape(-1, 3).astype(np.float64)
    N = p.shape[0]
    if N < 2:
        raise DegenerateError("separability needs at least two pixels")
    if mode == "exact":
        if N > EXACT_LIMIT:
            raise ValueError(f"exact separability limited to {EXACT_LIMIT} pixels, got {N}; use mode='sampled'")
        partial = [cdist(p[s:s + block], p).sum() for s in range(0, N, block)]
        return float(math.fsum(partial) / (N - 1) ** 2)
    if mode == "sampled":
        if n < 1:
            raise ValueError("sample count must be positive")
        rng = np.random.default_rng(seed)
        i = rng.integers(N, size=n)
        j = rng.integers(N - 1, size=n)
        j = j + (j >= i)
        d = np.sqrt(((p[i] - p[j]) ** 2).sum(axis=1))
        return float(d.mean() * N / (N - 1))
    raise ValueError(f"unknown separability mode {mode!r}")


def digest(img):
    return hashlib.sha256(np.ascontiguousarray(_pixels(img)).tobytes()).hexdigest()


@dataclass
class MetricReport:
    entropy: float
    rmse: float
    corr: float
    separability: float
    estimator: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        for k in ("entropy", "rmse", "corr", "separability"):
            if d[k] is not None and not math.isfinite(d[k]):
                d[k] = None
        return d


def evaluate(vis, truth=None, mode="auto", n=100_000, seed=0):
    """All four metrics for one visualisation.

    RMSE is left as ``None`` without a reference image; CORR is ``None``
    when a channel is constant.
    """
    N = _pixels(vis).shape[0] * _pixels(vis).shape[1]
    if mode == "auto":
        mode = "exact" if N <= EXACT_LIMIT else "sampled"
    try:
        c = corr(vis)
    except DegenerateError:
        c = None
    estimator = {"separability": mode, "corrections": CORRECTIONS, "entropy_log": "natural", "bins": 256}
    if mode == "sampled":
        estimator.update(sample_count=n, seed=seed)
    inputs = {"visualization_sha256": digest(vis)}
    if truth is not None:
        inputs["truth_sha256"] = digest(truth)
    return MetricReport(
        entropy=entropy(vis),
        rmse=rmse(vis, truth) if truth is not None else None,
        corr=c,
        separability=separability(vis, mode, n=n, seed=seed),
        estimator=estimator,
        inputs=inputs,
    )
