"""Classic visualisations: LP band selection, stretched CMF, PCA false colour."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import RgbImage, SpectralCube
from .errors import DegenerateError, DimensionError

log = logging.getLogger(__name__)

STRETCH_PERCENTILES = (2.0, 98.0)


def _values(cube):
    v = cube.values if isinstance(cube, SpectralCube) else np.asarray(cube)
    if v.ndim != 3:
        raise DimensionError(f"expected an H x W x B cube, got shape {v.shape}")
    return v.astype(np.float64)


def percentile_stretch(channel, low=STRETCH_PERCENTILES[0], high=STRETCH_PERCENTILES[1]):
    """Linear stretch of the [low, high] percentile range onto 0..255."""
    lo, hi = np.percentile(channel, [low, high])
    if hi <= lo:
        return np.zeros(channel.shape, dtype=np.uint8)
    out = (channel - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _compose(channels):
    return RgbImage(np.stack([percentile_stretch(c) for c in channels], axis=-1), "byte")


# --------------------------------------------------------------------------
# LP band selection


@dataclass
class BandSelection:
    indices: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def lp_residual(bands, selected, candidate):
    """RMS residual of predicting ``candidate`` from ``selected`` bands by
    least squares with an intercept. ``bands`` is ``pixels x B``."""
    design = np.column_stack([np.ones(bands.shape[0])] + [bands[:, s] for s in selected])
    target = bands[:, candidate]
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    r = target - design @ coef
    return float(np.sqrt(np.mean(r * r)))


def lp_band_select(cube, k=3):
    """Greedy linear-prediction band selection.

    First band: largest spatial variance. Second: smallest absolute
    correlation with the first. Each further band is the one worst
    predicted (largest least-squares residual) from the bands chosen so far.
    Ties go to the lowest index.
    """
    v = _values(cube)
    B = v.shape[2]
    if k < 1 or k > B:
        raise ValueError(f"cannot select {k} of {B} bands")
    bands = v.reshape(-1, B)
    var = bands.var(axis=0)
    first = int(np.argmax(var))  # argmax returns the lowest index on ties
    sel = BandSelection([first], [float(np.sqrt(var[first]))])
    if k == 1:
        return sel

    centered = bands - bands.mean(axis=0)
    std = np.sqrt(var)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (centered * centered[:, [first]]).mean(axis=0) / (std * std[first])
    score = np.where(np.isfinite(r), np.abs(r), np.inf)
    score[first] = np.inf
    if np.isfinite(score).any():
        second = int(np.argmin(score))
    else:  # every other band is constant
        second = next(b for b in range(B) if b != first)
    sel.indices.append(second)
    sel.residuals.append(lp_residual(bands, [first], second))

    while len(sel.indices) < k:
        best, best_res = None, -1.0
        for b in range(B):
            if b in sel.indices:
                continue
            res = lp_residual(bands, sel.indices, b)
            if res > best_res + 1e-12 * max(1.0, best_res):
                best, best_res = b, res
        sel.indices.append(best)
        sel.residuals.append(best_res)
    return sel


def lp_false_color(cube, k=3):
    """Selected bands sorted by wavelength; longest wavelength to red."""
    sel = lp_band_select(cube, k)
    if len(sel.indices) < 3:
        raise ValueError("an RGB composite needs k >= 3")
    v = _values(cube)
    blue, green, red = sorted(sel.indices[:3])
    log.info("LP band selection picked bands %s", sel.indices)
    return _compose([v[..., red], v[..., green], v[..., blue]]), sel


# --------------------------------------------------------------------------
# stretched colour matching functions

# CIE 1964 10-degree standard observer, 360-830 nm in 10 nm steps: x, y, z.
CIE1964_10DEG = np.array([
    [0.000000122200, 0.000000013398, 0.000000535027],
    [0.000005958600, 0.000000651100, 0.000026143700],
    [0.000159952000, 0.000017364000, 0.000704776000],
    [0.002361600000, 0.000253400000, 0.010482200000],
    [0.019109700000, 0.002004400000, 0.086010900000],
    [0.084736000000, 0.008756000000, 0.389366000000],
    [0.204492000000, 0.021391000000, 0.972542000000],
    [0.314679000000, 0.038676000000, 1.553480000000],
    [0.383734000000, 0.062077000000, 1.967280000000],
    [0.370702000000, 0.089456000000, 1.994800000000],
    [0.302273000000, 0.128201000000, 1.745370000000],
    [0.195618000000, 0.185190000000, 1.317560000000],
    [0.080507000000, 0.253589000000, 0.772125000000],
    [0.016172000000, 0.339133000000, 0.415254000000],
    [0.003816000000, 0.460777000000, 0.218502000000],
    [0.037465000000, 0.606741000000, 0.112044000000],
    [0.117749000000, 0.761757000000, 0.060709000000],
    [0.236491000000, 0.875211000000, 0.030451000000],
    [0.376772000000, 0.961988000000, 0.013676000000],
    [0.529826000000, 0.991761000000, 0.003988000000],
    [0.705224000000, 0.997340000000, 0.000000000000],
    [0.878655000000, 0.955552000000, 0.000000000000],
    [1.014160000000, 0.868934000000, 0.000000000000],
    [1.118520000000, 0.777405000000, 0.000000000000],
    [1.123990000000, 0.658341000000, 0.000000000000],
    [1.030480000000, 0.527963000000, 0.000000000000],
    [0.856297000000, 0.398057000000, 0.000000000000],
    [0.647467000000, 0.283493000000, 0.000000000000],
    [0.431567000000, 0.179828000000, 0.000000000000],
    [0.268329000000, 0.107633000000, 0.000000000000],
    [0.152568000000, 0.060281000000, 0.000000000000],
    [0.081260600000, 0.031800400000, 0.000000000000],
    [0.040850800000, 0.015905100000, 0.000000000000],
    [0.019941300000, 0.007748800000, 0.000000000000],
    [0.009576880000, 0.003717740000, 0.000000000000],
    [0.004552630000, 0.001768470000, 0.000000000000],
    [0.002174960000, 0.000846190000, 0.000000000000],
    [0.001044760000, 0.000407410000, 0.000000000000],
    [0.000508258000, 0.000198730000, 0.000000000000],
    [0.000250969000, 0.000098428000, 0.000000000000],
    [0.000126390000, 0.000049737000, 0.000000000000],
    [0.000064525800, 0.000025486000, 0.000000000000],
    [0.000033411700, 0.000013249000, 0.000000000000],
    [0.000017611500, 0.000007012800, 0.000000000000],
    [0.000009413630, 0.000003764730, 0.000000000000],
    [0.000005093470, 0.000002046130, 0.000000000000],
    [0.000002795310, 0.000001128090, 0.000000000000],
    [0.000001561470, 0.000000630920, 0.000000000000],
])
CIE_WAVELENGTHS = np.arange(360, 831, 10)

# linear-light sRGB from XYZ (D65)
XYZ_TO_SRGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])


def stretched_cmf_weights(bands):
    """``3 x bands`` X/Y/Z weights: the CMF table resampled so that 360 nm
    falls on band 0 and 830 nm on the last band, each row summing to 1."""
    if bands < 3:
        raise ValueError(f"stretched CMF needs at least 3 bands, got {bands}")
    pos = np.linspace(CIE_WAVELENGTHS[0], CIE_WAVELENGTHS[-1], bands)
    w = np.stack([np.interp(pos, CIE_WAVELENGTHS, CIE1964_10DEG[:, c]) for c in range(3)])
    return w / w.sum(axis=1, keepdims=True)


def stretched_cmf_xyz(cube):
    """Per-pixel XYZ as weighted band sums; linear in the cube values."""
    v = _values(cube)
    return v @ stretched_cmf_weights(v.shape[2]).T


def srgb_encode(linear):
    """sRGB transfer function on values already clipped to [0, 1]."""
    return np.where(linear <= 0.0031308, 12.92 * linear, 1.055 * np.power(linear, 1 / 2.4) - 0.055)


def stretched_cmf(cube, scale=None):
    """Render a cube through colour matching functions stretched over its bands.

    ``scale`` multiplies the cube first; by default it is the reciprocal of
    the 99th percentile of the values, so typical radiances land in [0, 1].
    """
    xyz = stretched_cmf_xyz(cube)
    if scale is None:
        top = np.percentile(np.abs(_values(cube)), 99)
        scale = 1.0 / top if top > 0 else 1.0
    rgb_lin = np.clip((xyz * scale) @ XYZ_TO_SRGB.T, 0.0, 1.0)
    out = np.clip(np.rint(srgb_encode(rgb_lin) * 255.0), 0, 255).astype(np.uint8)
    return RgbImage(out, "byte")


# --------------------------------------------------------------------------
# PCA


def pca_components(cube, k=3, rank_tol=1e-10):
    """Top-``k`` principal directions (``B x k``) and the pixel scores.

    Each direction's sign is chosen so its scores correlate non-negatively
    with the per-pixel band mean.
    """
    v = _values(cube)
    B = v.shape[2]
    if B < k:
        raise ValueError(f"need at least {k} bands, got {B}")
    x = v.reshape(-1, B)
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / max(x.shape[0] - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = evals[0] if evals[0] > 0 else 0.0
    rank = int(np.sum(evals > rank_tol * max(top, np.finfo(float).tiny)))
    if top <= 0 or rank < k:
        raise DegenerateError(f"pixel covariance has rank {rank} < {k}")
    comps = evecs[:, :k]
    scores = xc @ comps
    mean_spec = x.mean(axis=1) - x.mean()
    for c in range(k):
        if np.dot(scores[:, c], mean_spec) < 0:
            comps[:, c] *= -1
            scores[:, c] *= -1
    return comps, scores, evals


def pca_false_color(cube):
    """First three principal components to R, G, B with a 2-98% stretch."""
    v = _values(cube)
    _, scores, _ = pca_components(v, 3)
    h, w = v.shape[:2]
    return _compose([scores[:, c].reshape(h, w) for c in range(3)])


METHODS = {
    "lp": lambda cube, k=3: lp_false_color(cube, k)[0],
    "cmf": lambda cube, k=3: stretched_cmf(cube),
    "pca": lambda cube, k=3: pca_false_color(cube),
}
