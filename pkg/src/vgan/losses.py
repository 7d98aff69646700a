"""Adversarial, cycle-consistency and combined objectives.

Generator side: ``total_g = L_G(A,C) + L_G(C,B) + lam * L_cyc``.
Discriminator side: ``total_d = L_D(C) + L_D(B)``.

Each adversarial term is a logistic cross-entropy per logit, averaged over
the logit vector. Domain-B "real" samples are compressor outputs
``z = Cpr(x)``; they are detached wherever they serve as a target or as a
real sample, so the compressor is shaped only through the cycle and
generator adversarial paths.
"""

import math
from dataclasses import astuple, dataclass, fields
from types import SimpleNamespace

import numpy as np

from . import autodiff as ad
from .networks import (
    DISCRIMINATORS,
    GENERATORS,
    compressor_forward,
    discriminator_forward,
    frozen,
    group,
    mapper_forward,
)

NAN = float("nan")


@dataclass
class LossReport:
    d_loss_C: float = NAN
    d_loss_B: float = NAN
    g_adv_AC: float = NAN
    g_adv_CB: float = NAN
    cycle_loss: float = NAN
    total_g: float = NAN
    total_d: float = NAN
    d_real_confidence: float = NAN
    d_fake_confidence: float = NAN

    def merge(self, other):
        """Fill this report's missing (NaN) fields from ``other``."""
        for f in fields(self):
            if math.isnan(getattr(self, f.name)):
                setattr(self, f.name, getattr(other, f.name))
        return self

    def values(self):
        return astuple(self)

    def is_finite(self):
        return all(math.isfinite(v) for v in self.values())

    @property
    def confidence_gap(self):
        """Mean distance of the real/fake confidences from 1/2."""
        return 0.5 * (abs(self.d_real_confidence - 0.5) + abs(self.d_fake_confidence - 0.5))


CSV_FIELDS = ["iteration"] + [f.name for f in fields(LossReport)]


def csv_row(iteration, report):
    return [str(iteration)] + [repr(float(v)) for v in report.values()]


def loss_d(real_logits, fake_logits):
    return ad.bce_logits(real_logits, 1) + ad.bce_logits(fake_logits, 0)


def loss_g_adv(fake_logits):
    return ad.bce_logits(fake_logits, 1)


def _mapper(params, config, mappers, which):
    if mappers and which in mappers:
        return mappers[which]
    return lambda img: mapper_forward(params, img, config, which)


def generator_pass(x, y, params, config, mappers=None, cycle_target=None):
    """Forward every generator path needed by the objectives, keeping the graph.

    ``cycle_target`` replaces the detached ``Cpr(x)`` that the B->C->B cycle
    is compared against; finite-difference checks pin it this way, because
    perturbing the compressor would otherwise move the target too.
    """
    m1 = _mapper(params, config, mappers, "M1")
    m2 = _mapper(params, config, mappers, "M2")
    y = ad.as_tensor(y)
    z = compressor_forward(params, x, config)
    fake_c = m1(z)
    fake_b = m2(y)
    target = z.detach() if cycle_target is None else ad.as_tensor(cycle_target).detach()
    return SimpleNamespace(y=y, z=z, fake_c=fake_c, fake_b=fake_b, target=target,
                           rec_b=m2(fake_c), rec_c=m1(fake_b))


def _cycle(gp):
    return ad.l1_loss(gp.rec_b, gp.target) + ad.l1_loss(gp.rec_c, gp.y)


def loss_cycle(x, y, params, config, mappers=None, cycle_target=None):
    """L1(M2(M1(Cpr(x))), Cpr(x)) + L1(M1(M2(y)), y), with the first target detached."""
    return _cycle(generator_pass(x, y, params, config, mappers, cycle_target))


def objective_g(x, y, params, config, lam=50.0, mappers=None, gp=None, cycle_target=None):
    """Generator objective; backward reaches the Cpr/M1/M2 parameters only.

    Discriminator parameters enter as detached constants. ``gp`` lets a
    caller reuse a :func:`generator_pass` computed earlier with the same
    generator parameters.
    """
    if lam < 0:
        raise ValueError("cycle weight must be non-negative")
    if gp is None:
        gp = generator_pass(x, y, params, config, mappers, cycle_target)
    dparams = frozen(group(params, DISCRIMINATORS))
    g_ac = loss_g_adv(discriminator_forward(dparams, gp.fake_c, config, "D_C"))
    g_cb = loss_g_adv(discriminator_forward(dparams, gp.fake_b, config, "D_B"))
    cyc = _cycle(gp)
    total = g_ac + g_cb + cyc * lam
    report = LossReport(g_adv_AC=g_ac.item(), g_adv_CB=g_cb.item(),
                        cycle_loss=cyc.item(), total_g=total.item())
    return total, report


def discriminator_objective(params, config, real_c, fake_c, real_b, fake_b):
    """Discriminator objective on explicit samples (all treated as constants)."""
    real_c, fake_c, real_b, fake_b = (ad.as_tensor(t).detach() for t in (real_c, fake_c, real_b, fake_b))
    lr_c = discriminator_forward(params, real_c, config, "D_C")
    lf_c = discriminator_forward(params, fake_c, config, "D_C")
    lr_b = discriminator_forward(params, real_b, config, "D_B")
    lf_b = discriminator_forward(params, fake_b, config, "D_B")
    d_c = loss_d(lr_c, lf_c)
    d_b = loss_d(lr_b, lf_b)
    total = d_c + d_b
    real_conf = 0.5 * (ad.sigmoid(lr_c.data).mean() + ad.sigmoid(lr_b.data).mean())
    fake_conf = 0.5 * (ad.sigmoid(lf_c.data).mean() + ad.sigmoid(lf_b.data).mean())
    report = LossReport(d_loss_C=d_c.item(), d_loss_B=d_b.item(), total_d=total.item(),
                        d_real_confidence=float(real_conf), d_fake_confidence=float(fake_conf))
    return total, report


def objective_d(x, y, params, config):
    """Discriminator objective for one (x, y) pair.

    Generator outputs are computed from detached parameters, so backward
    reaches the D_C/D_B parameters only.
    """
    gparams = frozen(group(params, GENERATORS))
    y = ad.as_tensor(y)
    z = compressor_forward(gparams, x, config)
    fake_c = mapper_forward(gparams, z, config, "M1")
    fake_b = mapper_forward(gparams, y, config, "M2")
    return discriminator_objective(params, config, real_c=y, fake_c=fake_c, real_b=z, fake_b=fake_b)


# --------------------------------------------------------------------------
# equilibrium diagnostic


@dataclass
class EquilibriumSummary:
    real_ma: np.ndarray
    fake_ma: np.ndarray
    status: str
    start_gap: float
    end_gap: float

    @property
    def shrinking(self):
        return self.end_gap < self.start_gap


def _moving_average(values, window):
    values = np.asarray(values, dtype=np.float64)
    c = np.cumsum(np.insert(values, 0, 0.0))
    out = np.empty_like(values)
    for i in range(values.size):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def equilibrium_diagnostic(reports, window=100, band=0.1):
    """Track the discriminator confidences against the 1/2 equilibrium.

    At equilibrium both the mean confidence on real samples and on fakes
    are 1/2. ``status`` is ``"converged"`` when both moving averages end
    within ``band`` of 1/2, ``"D-dominant"`` when real is above and fake
    below that band, ``"G-dominant"`` when fakes are rated above it, and
    ``"undecided"`` otherwise. The gaps compare the first and last
    ``window`` reports.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("need at least two reports")
    real = [r.d_real_confidence for r in reports]
    fake = [r.d_fake_confidence for r in reports]
    real_ma = _moving_average(real, window)
    fake_ma = _moving_average(fake, window)
    r_end, f_end = real_ma[-1], fake_ma[-1]
    if abs(r_end - 0.5) <= band and abs(f_end - 0.5) <= band:
        status = "converged"
    elif r_end > 0.5 + band and f_end < 0.5 - band:
        status = "D-dominant"
    elif f_end > 0.5 + band:
        status = "G-dominant"
    else:
        status = "undecided"
    gaps = np.array([r.confidence_gap for r in reports])
    w = min(window, len(reports))
    return EquilibriumSummary(real_ma=real_ma, fake_ma=fake_ma, status=status,
                              start_gap=float(gaps[:w].mean()), end_gap=float(gaps[-w:].mean()))
