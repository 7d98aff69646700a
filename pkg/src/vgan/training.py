"""Alternating discriminator/generator training with history queues."""

import csv
import io
import logging
import os
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .data import patch_at, stitch_tiles
from .errors import DivergenceError, ValidityError
from .losses import CSV_FIELDS, csv_row, discriminator_objective, generator_pass, objective_g
from .networks import (
    DISCRIMINATORS,
    GENERATORS,
    Checkpoint,
    NetConfig,
    atomic_write,
    generator_forward,
    group,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr_g: float = 1e-4
    lr_d: float = 1e-5
    lam: float = 50.0
    epoch_size: int = 6000
    epochs: int = 2
    batch: int = 1
    history_capacity: int = 50
    patch_size: int = 128
    seed: int = 0
    gen_width: int = 64
    disc_widths: tuple = (64, 128, 256, 512)

    def __post_init__(self):
        object.__setattr__(self, "disc_widths", tuple(int(c) for c in self.disc_widths))
        if self.lr_g < 0 or self.lr_d < 0 or self.lam < 0:
            raise ValueError("learning rates and cycle weight must be non-negative")
        if self.epoch_size < 1 or self.epochs < 1 or self.history_capacity < 1:
            raise ValueError("epoch size, epochs and history capacity must be >= 1")
        if self.batch != 1:
            raise ValueError("only batch size 1 is supported")

    @property
    def total_iterations(self):
        return self.epoch_size * self.epochs

    def net_config(self, bands):
        return NetConfig(bands=bands, gen_width=self.gen_width, disc_widths=self.disc_widths)

    def to_dict(self):
        d = asdict(self)
        d["disc_widths"] = list(self.disc_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


PRESETS = {
    "full": TrainConfig(),
    "desk": TrainConfig(epoch_size=1500, epochs=1, patch_size=32, gen_width=16, disc_widths=(8, 8, 8, 8)),
}


class HistoryBuffer:
    """FIFO queues of recent fake and real samples for one discriminator."""

    def __init__(self, capacity=50):
        self.capacity = capacity
        self.fake = deque(maxlen=capacity)
        self.real = deque(maxlen=capacity)

    def push(self, fake, real):
        self.fake.append(np.array(fake, dtype=np.float32))
        self.real.append(np.array(real, dtype=np.float32))

    def __len__(self):
        return len(self.fake)


def history_sample(queue, rng):
    """Uniform draw from a queue; the queue is left untouched."""
    if not queue:
        raise IndexError("cannot sample from an empty history queue")
    return queue[int(rng.integers(len(queue)))]


@dataclass
class TrainState:
    params: dict
    net: NetConfig
    adam_g: AdamState
    adam_d: AdamState
    rng: np.random.Generator
    buffers: dict = field(default_factory=dict)
    iteration: int = 0

    @classmethod
    def fresh(cls, config, bands, seed=None):
        seed = config.seed if seed is None else seed
        init_seed, _, _, rng_seed = _stream_seeds(seed)
        net = config.net_config(bands)
        params = init_params(net, int(init_seed))
        return cls(
            params=params,
            net=net,
            adam_g=AdamState.for_params(group(params, GENERATORS), config.lr_g),
            adam_d=AdamState.for_params(group(params, DISCRIMINATORS), config.lr_d),
            rng=np.random.default_rng(int(rng_seed)),
            buffers={d: HistoryBuffer(config.history_capacity) for d in DISCRIMINATORS},
        )


def _stream_seeds(seed):
    return np.random.SeedSequence(seed).generate_state(4)


def train_step(state, x, y, config):
    """One D-then-G iteration on a spectral patch ``x`` and RGB patch ``y``.

    Any non-finite loss, activation or optimizer state raises
    :class:`DivergenceError`.
    """
    try:
        return _train_step(state, x, y, config)
    except ValidityError as exc:
        raise DivergenceError(f"numeric failure at iteration {state.iteration}: {exc}") from exc


def _train_step(state, x, y, config):
    params, net = state.params, state.net
    gp = generator_pass(x, y, params, net)
    state.buffers["D_C"].push(fake=gp.fake_c.data, real=gp.y.data)
    state.buffers["D_B"].push(fake=gp.fake_b.data, real=gp.z.data)

    draws = {}
    for d in DISCRIMINATORS:
        buf = state.buffers[d]
        draws[d] = (history_sample(buf.real, state.rng), history_sample(buf.fake, state.rng))

    dparams = group(params, DISCRIMINATORS)
    d_total, d_report = discriminator_objective(
        params, net,
        real_c=draws["D_C"][0], fake_c=draws["D_C"][1],
        real_b=draws["D_B"][0], fake_b=draws["D_B"][1],
    )
    _guard(d_report, state, "discriminator")
    _apply(d_total, dparams, state.adam_d, d_report, state)

    gparams = group(params, GENERATORS)
    g_total, g_report = objective_g(x, y, params, net, config.lam, gp=gp)
    report = d_report.merge(g_report)
    _guard(report, state, "generator")
    _apply(g_total, gparams, state.adam_g, report, state)

    state.iteration += 1
    return state, report


def _apply(loss, params, adam, report, state):
    ad.backward(loss, params)
    try:
        adam_step(params, adam)
    except ValidityError as exc:
        raise DivergenceError(f"optimizer step failed at iteration {state.iteration}: {exc}",
                              report=report) from exc


def _guard(report, state, phase):
    values = (report.d_loss_C, report.d_loss_B, report.total_d)
    if phase == "generator":
        values = report.values()
    if not np.all(np.isfinite(values)):
        raise DivergenceError(
            f"non-finite {phase} loss at iteration {state.iteration}: {report}", report=report)


# --------------------------------------------------------------------------
# checkpoints of the full training state


def state_to_checkpoint(state, config, extra_meta=None):
    arrays = {}
    for d, buf in state.buffers.items():
        for kind in ("fake", "real"):
            for i, img in enumerate(getattr(buf, kind)):
                arrays[f"buffer/{d}/{kind}/{i:04d}"] = img
    meta = {**(extra_meta or {}), "train_config": config.to_dict(), "rng": state.rng.bit_generator.state}
    return Checkpoint(config=state.net, params=state.params, iteration=state.iteration,
                      optimizers={"G": state.adam_g, "D": state.adam_d}, arrays=arrays, meta=meta)


def state_from_checkpoint(ckpt, config=None):
    config = config or TrainConfig.from_dict(ckpt.meta["train_config"])
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.meta["rng"]
    buffers = {d: HistoryBuffer(config.history_capacity) for d in DISCRIMINATORS}
    for name in sorted(ckpt.arrays):
        kind, d, which, _ = name.split("/")
        if kind == "buffer":
            getattr(buffers[d], which).append(ckpt.arrays[name])
    return TrainState(params=ckpt.params, net=ckpt.config, adam_g=ckpt.optimizers["G"],
                      adam_d=ckpt.optimizers["D"], rng=rng, buffers=buffers,
                      iteration=ckpt.iteration)


# --------------------------------------------------------------------------
# the loop


@dataclass
class TrainResult:
    state: TrainState
    reports: list
    checkpoints: list


def _csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    w.writerows(rows)
    return buf.getvalue()


def _read_rows(path, upto):
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return [r for r in rows if int(r[0]) <= upto]


def train_loop(config, cube, rgb_sources, out_dir=None, resume=None, stop_at=None, progress_every=100,
               extra_meta=None):
    """Run ``config.total_iterations`` training steps.

    ``cube`` is a normalised ``H x W x B`` array (or a list of them, all with
    the same band count), ``rgb_sources`` a list of normalised ``H x W x 3``
    arrays. With ``out_dir`` a checkpoint
    ``ckpt_epoch{n}`` is written at every epoch end and ``report.csv`` holds
    one row per iteration. ``resume`` (a checkpoint path) continues a run
    exactly where it stopped; ``stop_at`` ends the run early after writing
    ``ckpt_iter{n}``. ``extra_meta`` (JSON-able) is stored in every checkpoint.
    """
    cubes = [np.asarray(cube, dtype=np.float32)] if np.ndim(cube) == 3 else [
        np.asarray(c, dtype=np.float32) for c in cube]
    rgb_sources = [np.asarray(s, dtype=np.float32) for s in rgb_sources]
    if not rgb_sources or not cubes or any(c.size == 0 for c in cubes):
        raise ValueError("training needs a cube and at least one RGB source")
    if len({c.shape[2] for c in cubes}) != 1:
        raise ValueError("all cubes must have the same band count")
    _, x_seed, y_seed, _ = _stream_seeds(config.seed)

    rows = []
    if resume is not None:
        state = state_from_checkpoint(load_checkpoint(resume), config)
        if out_dir:
            rows = _read_rows(os.path.join(out_dir, "report.csv"), state.iteration)
    else:
        state = TrainState.fresh(config, cubes[0].shape[2])

    reports, written = [], []
    end = config.total_iterations if stop_at is None else min(stop_at, config.total_iterations)
    size = config.patch_size
    while state.iteration < end:
        i = state.iteration
        x = patch_at(cubes, size, int(x_seed), i)
        y = patch_at(rgb_sources, size, int(y_seed), i)
        try:
            state, report = train_step(state, x, y, config)
        except DivergenceError as exc:
            log.error("training diverged at iteration %d; last report: %s", i, exc.report)
            raise
        reports.append(report)
        rows.append(csv_row(state.iteration, report))
        if progress_every and state.iteration % progress_every == 0:
            log.info("iter %d  total_g %.4f  total_d %.4f  conf real %.3f fake %.3f",
                     state.iteration, report.total_g, report.total_d,
                     report.d_real_confidence, report.d_fake_confidence)
        at_epoch_end = state.iteration % config.epoch_size == 0
        at_stop = stop_at is not None and state.iteration == end
        if out_dir and (at_epoch_end or at_stop):
            name = (f"ckpt_epoch{state.iteration // config.epoch_size}" if at_epoch_end
                    else f"ckpt_iter{state.iteration}")
            path = os.path.join(out_dir, name)
            os.makedirs(out_dir, exist_ok=True)
            save_checkpoint(state_to_checkpoint(state, config, extra_meta), path)
            atomic_write(os.path.join(out_dir, "report.csv"), _csv_text(rows).encode())
            written.append(path)
    return TrainResult(state=state, reports=reports, checkpoints=written)


def make_visualizer(params, net):
    """``H x W x B`` normalised block -> ``H x W x 3`` values in (-1, 1)."""
    frozen_params = {k: v.detach() for k, v in params.items()}

    def model(block):
        return generator_forward(frozen_params, block, net).data

    return model


def visualize(cube, params, net, tile=128):
    """Stitched natural-colour rendering of a normalised cube."""
    return stitch_tiles(cube, make_visualizer(params, net), tile)


def rgb_sources_from_images(images):
    return [img.normalized().pixels for img in images]

