"""Compressor, mappers and discriminators, plus checkpoint files.

All generator convolutions are 1x1, so the generator path never changes
the spatial size of its input. Parameters live in one flat, ordered
``name -> Tensor`` dict; the prefix (``cpr.``, ``M1.``, ``M2.``, ``D_C.``,
``D_B.``) says which network a parameter belongs to.
"""

import io
import json
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, FormatError
from .optim import AdamState

GENERATORS = ("cpr", "M1", "M2")
DISCRIMINATORS = ("D_C", "D_B")


@dataclass(frozen=True)
class NetConfig:
    """Network sizes. The defaults are the full-size model."""

    bands: int
    gen_width: int = 64
    disc_widths: tuple = (64, 128, 256, 512)
    res_blocks: int = 5
    kernel: int = 4
    slope: float = 0.2
    eps: float = 1e-5
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "disc_widths", tuple(int(c) for c in self.disc_widths))
        if self.bands < 1 or self.gen_width < 1 or not self.disc_widths:
            raise ValueError("bands, gen_width and disc_widths must be positive")

    @classmethod
    def tiny(cls, bands, **overrides):
        return cls(bands=bands, **{"gen_width": 16, "disc_widths": (8, 8, 8, 8), **overrides})

    @property
    def downsample(self):
        return 2 ** len(self.disc_widths)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# --------------------------------------------------------------------------
# parameter layout


def _conv1x1_shapes(prefix, cin, cout):
    return [(f"{prefix}.w", (cin, cout), "weight"), (f"{prefix}.b", (cout,), "zero")]


def _norm_shapes(prefix, c):
    return [(f"{prefix}.gain", (c,), "one"), (f"{prefix}.shift", (c,), "zero")]


def param_layout(config):
    """Ordered ``(name, shape, init_kind)`` triples for every parameter."""
    w = config.gen_width
    out = []
    out += _conv1x1_shapes("cpr.conv1", config.bands, w)
    out += _norm_shapes("cpr.norm1", w)
    out += _conv1x1_shapes("cpr.conv2", w, 3)
    for m in ("M1", "M2"):
        out += _conv1x1_shapes(f"{m}.stem", 3, w)
        out += _norm_shapes(f"{m}.stem_norm", w)
        for r in range(config.res_blocks):
            for j in (1, 2):
                out += _conv1x1_shapes(f"{m}.res{r}.conv{j}", w, w)
                out += _norm_shapes(f"{m}.res{r}.norm{j}", w)
        out += _conv1x1_shapes(f"{m}.head", w, 3)
    k = config.kernel
    n = len(config.disc_widths)
    for d in DISCRIMINATORS:
        cin = 3
        for i, cout in enumerate(config.disc_widths):
            out.append((f"{d}.conv{i}.w", (k, k, cin, cout), "weight"))
            out.append((f"{d}.conv{i}.b", (cout,), "zero"))
            if _disc_layer_normalized(i, n):
                out += _norm_shapes(f"{d}.norm{i}", cout)
            cin = cout
    return out


def _disc_layer_normalized(i, n):
    # first layer sees raw pixels; last layer emits the logits
    return 0 < i < n - 1


def init_params(config, seed=0, dtype=np.float32):
    """Weights ~ Normal(0, init_std); norm gains 1; shifts and biases 0."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, kind in param_layout(config):
        if kind == "weight":
            data = rng.normal(0.0, config.init_std, size=shape)
        elif kind == "one":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return params


def group(params, prefixes):
    """Sub-dict of the parameters whose network prefix is in ``prefixes``."""
    if isinstance(prefixes, str):
        prefixes = (prefixes,)
    return {k: v for k, v in params.items() if k.split(".", 1)[0] in prefixes}


def frozen(params):
    """Detached views of ``params``; gradients will not reach the originals."""
    return {k: v.detach() for k, v in params.items()}


# --------------------------------------------------------------------------
# forward passes


def _conv(params, prefix, x):
    return ad.conv1x1(x, params[f"{prefix}.w"], params[f"{prefix}.b"])


def _inorm(params, prefix, x, eps):
    return ad.instance_norm(x, params[f"{prefix}.gain"], params[f"{prefix}.shift"], eps)


def compressor_forward(params, x, config):
    """Spectral patch ``H x W x B`` -> false-colour image ``H x W x 3`` in (-1, 1)."""
    x = ad.as_tensor(x)
    if x.data.ndim != 3 or x.shape[2] != config.bands:
        raise DimensionError(f"compressor expects {config.bands} bands, got shape {x.shape}")
    h = _conv(params, "cpr.conv1", x)
    h = ad.relu(_inorm(params, "cpr.norm1", h, config.eps))
    return ad.tanh(_conv(params, "cpr.conv2", h))


def residual_block(params, prefix, x, eps):
    h = ad.relu(_inorm(params, f"{prefix}.norm1", _conv(params, f"{prefix}.conv1", x), eps))
    h = _inorm(params, f"{prefix}.norm2", _conv(params, f"{prefix}.conv2", h), eps)
    return x + h


def mapper_forward(params, img, config, which="M1"):
    """Three-channel image -> three-channel image in (-1, 1), same size.

    ``M1`` maps false colour to natural colour, ``M2`` the reverse.
    """
    if which not in ("M1", "M2"):
        raise ValueError(f"unknown mapper {which!r}")
    img = ad.as_tensor(img)
    if img.data.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"mapper expects H x W x 3 input, got {img.shape}")
    h = ad.relu(_inorm(params, f"{which}.stem_norm", _conv(params, f"{which}.stem", img), config.eps))
    for r in range(config.res_blocks):
        h = residual_block(params, f"{which}.res{r}", h, config.eps)
    return ad.tanh(_conv(params, f"{which}.head", h))


def generator_forward(params, x, config):
    """The full spectral-to-natural-colour path, M1(Cpr(x))."""
    return mapper_forward(params, compressor_forward(params, x, config), config, "M1")


def discriminator_forward(params, img, config, which="D_C"):
    """Image -> flat vector of un-activated logits.

    Each layer halves height and width, so the result has
    ``(H/16) * (W/16) * c4`` entries for the default four layers.
    """
    if which not in DISCRIMINATORS:
        raise ValueError(f"unknown discriminator {which!r}")
    img = ad.as_tensor(img)
    f = config.downsample
    if img.data.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"discriminator expects H x W x 3 input, got {img.shape}")
    if img.shape[0] % f or img.shape[1] % f:
        raise DimensionError(f"discriminator input {img.shape[:2]} not divisible by {f}")
    n = len(config.disc_widths)
    h = img
    for i in range(n):
        h = ad.conv_down(h, params[f"{which}.conv{i}.w"], params[f"{which}.conv{i}.b"], stride=2, pad=1)
        if _disc_layer_normalized(i, n):
            h = ad.batch_norm(h, params[f"{which}.norm{i}.gain"], params[f"{which}.norm{i}.shift"], config.eps)
        if i < n - 1:
            h = ad.leaky_relu(h, config.slope)
    return ad.flatten(h)


def logit_length(config, height, width):
    f = config.downsample
    return (height // f) * (width // f) * config.disc_widths[-1]


# --------------------------------------------------------------------------
# checkpoints
#
# layout (little-endian):
#   b"VGANCKPT" | u32 version | u64 iteration | u32 meta length | meta JSON
#   | u32 entry count | entries
# entry: u32 name length | name (utf-8) | u32 rank | u32 extents[rank]
#        | float32 values (C order)

MAGIC = b"VGANCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    config: NetConfig
    params: dict
    iteration: int = 0
    optimizers: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _entries(ckpt):
    for name, p in ckpt.params.items():
        yield f"param/{name}", p.data
    for gname, st in sorted(ckpt.optimizers.items()):
        for name in st.m:
            yield f"adam/{gname}/m/{name}", st.m[name]
            yield f"adam/{gname}/v/{name}", st.v[name]
    for name in sorted(ckpt.arrays):
        yield f"array/{name}", ckpt.arrays[name]


def checkpoint_bytes(ckpt):
    meta = {
        "config": ckpt.config.to_dict(),
        "optimizers": {
            g: {"learning_rate": s.learning_rate, "beta1": s.beta1, "beta2": s.beta2,
                "epsilon": s.epsilon, "step": s.step}
            for g, s in sorted(ckpt.optimizers.items())
        },
        "extra": ckpt.meta,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQI", VERSION, ckpt.iteration, len(blob)))
    buf.write(blob)
    entries = list(_entries(ckpt))
    buf.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def atomic_write(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_checkpoint(ckpt, path):
    atomic_write(path, checkpoint_bytes(ckpt))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def parse_checkpoint(data):
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version, iteration, meta_len = r.unpack("<IQI")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        config = NetConfig.from_dict(meta["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad checkpoint metadata: {exc}") from exc

    expected = {name: shape for name, shape, _ in param_layout(config)}
    params, moments, arrays = {}, {}, {}
    (count,) = r.unpack("<I")
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8")
        (rank,) = r.unpack("<I")
        if rank > 8:
            raise FormatError(f"entry {name}: implausible rank {rank}")
        shape = r.unpack(f"<{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32).reshape(shape)
        kind, _, rest = name.partition("/")
        if kind == "param":
            if rest not in expected:
                raise FormatError(f"unknown parameter name {rest!r}")
            if tuple(expected[rest]) != shape:
                raise FormatError(f"parameter {rest}: shape {shape} != {expected[rest]}")
            params[rest] = Tensor(values, requires_grad=True)
        elif kind == "adam":
            gname, which, pname = rest.split("/", 2)
            moments.setdefault(gname, {"m": {}, "v": {}})[which][pname] = values
        elif kind == "array":
            arrays[rest] = values
        else:
            raise FormatError(f"unknown entry kind in {name!r}")
    if r.pos != len(data):
        raise FormatError("trailing bytes after checkpoint entries")
    missing = set(expected) - set(params)
    if missing:
        raise FormatError(f"checkpoint lacks parameters: {sorted(missing)[:3]}...")
    params = {name: params[name] for name in expected}

    optimizers = {}
    for gname, hp in meta.get("optimizers", {}).items():
        mom = moments.get(gname, {"m": {}, "v": {}})
        optimizers[gname] = AdamState(
            learning_rate=hp["learning_rate"], beta1=hp["beta1"], beta2=hp["beta2"],
            epsilon=hp["epsilon"], step=hp["step"], m=mom["m"], v=mom["v"],
        )
    return Checkpoint(config=config, params=params, iteration=iteration,
                      optimizers=optimizers, arrays=arrays, meta=meta.get("extra", {}))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
