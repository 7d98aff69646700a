"""Dense tensors with reverse-mode differentiation.

Only the operations the VGAN networks need are provided: pixel-wise (1x1)
convolution, strided down-sampling convolution, instance/batch
normalisation, tanh/relu/leaky-relu, logistic cross-entropy on logits and
the L1 loss, plus the handful of arithmetic helpers used to compose them.

Tensors are channel-last (``H x W x C``) and carry a batch of one, which is
the only batch size used in training. There is no general broadcasting:
binary arithmetic requires equal shapes or a Python scalar.

Every differentiable result records its parents and a closure mapping the
output gradient to the parent gradients. Node ids increase with creation,
so sorting the reachable nodes by id gives a topological order.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, DimensionError, GraphError, ValidityError

_ids = itertools.count()


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValidityError("tensor contains NaN or Inf")


class Tensor:
    """An n-dimensional array that can take part in a computation graph."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.array(data, dtype=dtype, copy=True)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = "leaf"
        self._id = next(_ids)
        self._parents = ()
        self._backward = None
        self._consumed = False

    @classmethod
    def _result(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._id = next(_ids)
        out._consumed = False
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
            out.op = op
        else:
            out._parents = ()
            out._backward = None
            out.op = "const"
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        """Same values, cut from the graph. The array is shared, not copied."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.op = "const"
        out._id = next(_ids)
        out._parents = ()
        out._backward = None
        out._consumed = False
        return out

    def is_valid(self):
        return bool(np.all(np.isfinite(self.data)))

    def check_valid(self):
        if not self.is_valid():
            raise ValidityError(f"{self.op} tensor of shape {self.shape} is not finite")
        return self

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self, params=None):
        backward(self, params)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic: equal shapes or Python scalars only
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


# --------------------------------------------------------------------------
# graph traversal


def _reachable(loss):
    seen = set()
    order = []
    stack = [loss]
    while stack:
        node = stack.pop()
        if node._id in seen:
            continue
        seen.add(node._id)
        order.append(node)
        stack.extend(p for p in node._parents if p.requires_grad)
    order.sort(key=lambda n: n._id, reverse=True)
    return order


def backward(loss, params=None):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    ``params`` (an iterable of tensors or a name->tensor mapping) have their
    gradients reset to zero first, so parameters off the path end up with an
    all-zero gradient. The graph is released afterwards; a second call on the
    same graph raises :class:`GraphError`.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise GraphError("backward needs a scalar tensor")
    if loss._consumed:
        raise GraphError("backward already ran on this graph")
    if params is not None:
        values = params.values() if hasattr(params, "values") else params
        for p in values:
            p.zero_grad()
    if not loss.requires_grad:
        loss._consumed = True
        return

    nodes = _reachable(loss)
    grads = {loss._id: np.ones_like(loss.data)}
    for node in nodes:
        g = grads.pop(node._id, None)
        if node._backward is None:
            if node._consumed:
                raise GraphError("graph was released by an earlier backward pass")
            if g is not None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            continue
        if g is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg

    for node in nodes:
        if node._parents:
            node._backward = None
            node._parents = ()
            node._consumed = True
    loss._consumed = True


# --------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        c = float(b)
        _check_finite(a.data)
        return Tensor._result(a.data + a.data.dtype.type(c), (a,), lambda g: (g,), "add_scalar")
    a = as_tensor(a)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return Tensor._result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    ad, bd = a.data, b.data
    return Tensor._result(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a, c):
    c = a.data.dtype.type(c)
    return Tensor._result(a.data * c, (a,), lambda g: (g * c,), "scale")


def tsum(a):
    shape, dtype = a.shape, a.dtype
    return Tensor._result(
        np.asarray(a.data.sum(), dtype=dtype), (a,),
        lambda g: (np.full(shape, g, dtype=dtype),), "sum",
    )


def tmean(a):
    n = a.size
    shape, dtype = a.shape, a.dtype
    return Tensor._result(
        np.asarray(a.data.mean(), dtype=dtype), (a,),
        lambda g: (np.full(shape, g / n, dtype=dtype),), "mean",
    )


def reshape(a, shape):
    old = a.shape
    return Tensor._result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def flatten(a):
    return reshape(a, (-1,))


# --------------------------------------------------------------------------
# convolutions


def conv1x1(x, weight, bias):
    """Pixel-wise linear map: ``out[h, w] = x[h, w] @ weight + bias``."""
    if x.data.ndim != 3:
        raise DimensionError(f"conv1x1 expects H x W x C input, got {x.shape}")
    h, w, cin = x.shape
    if weight.shape[:1] != (cin,) or weight.data.ndim != 2:
        raise DimensionError(f"conv1x1: weight {weight.shape} does not match {cin} input channels")
    cout = weight.shape[1]
    if bias.shape != (cout,):
        raise DimensionError(f"conv1x1: bias {bias.shape} != ({cout},)")
    _check_finite(x.data)
    flat = x.data.reshape(-1, cin)
    wd = weight.data
    out = (flat @ wd + bias.data).reshape(h, w, cout)

    def back(g):
        g2 = g.reshape(-1, cout)
        gx = (g2 @ wd.T).reshape(h, w, cin) if x.requires_grad else None
        gw = flat.T @ g2 if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return Tensor._result(out, (x, weight, bias), back, "conv1x1")


def conv_down(x, weight, bias, stride=2, pad=1):
    """Zero-padded strided cross-correlation; weight is ``k x k x Cin x Cout``.

    With the default 4x4 kernel, stride 2 and padding 1 the output has
    exactly half the height and width of the input.
    """
    if x.data.ndim != 3:
        raise DimensionError(f"conv_down expects H x W x C input, got {x.shape}")
    h, w, cin = x.shape
    if h % stride or w % stride:
        raise DimensionError(f"conv_down: spatial size {h}x{w} not divisible by {stride}")
    if weight.data.ndim != 4 or weight.shape[0] != weight.shape[1] or weight.shape[2] != cin:
        raise DimensionError(f"conv_down: weight {weight.shape} incompatible with input {x.shape}")
    k, cout = weight.shape[0], weight.shape[3]
    if bias.shape != (cout,):
        raise DimensionError(f"conv_down: bias {bias.shape} != ({cout},)")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if ho != h // stride or wo != w // stride:
        raise DimensionError(f"conv_down: kernel {k}/pad {pad} does not divide size by {stride}")
    _check_finite(x.data)

    xp = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(0, 1))
    # (ho, wo, cin, k, k) -> (ho*wo, k*k*cin) ordered like weight.reshape(-1, cout)
    cols = win[::stride, ::stride].transpose(0, 1, 3, 4, 2).reshape(ho * wo, k * k * cin)
    wmat = weight.data.reshape(k * k * cin, cout)
    out = (cols @ wmat + bias.data).reshape(ho, wo, cout)

    def back(g):
        g2 = g.reshape(ho * wo, cout)
        gx = gw = gb = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(ho, wo, k, k, cin)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
            gx = gxp[pad:pad + h, pad:pad + w]
        if weight.requires_grad:
            gw = (cols.T @ g2).reshape(weight.shape)
        if bias.requires_grad:
            gb = g2.sum(axis=0)
        return gx, gw, gb

    return Tensor._result(out, (x, weight, bias), back, "conv_down")


# --------------------------------------------------------------------------
# normalisation


def _spatial_norm(x, gain, shift, eps, op):
    if x.data.ndim != 3:
        raise DimensionError(f"{op} expects H x W x C input, got {x.shape}")
    h, w, c = x.shape
    n = h * w
    if n < 2:
        raise DegenerateError(f"{op}: need at least 2 pixels for statistics, got {h}x{w}")
    if gain.shape != (c,) or shift.shape != (c,):
        raise DimensionError(f"{op}: gain/shift must have shape ({c},)")
    _check_finite(x.data)
    xd = x.data
    mu = xd.mean(axis=(0, 1))
    xc = xd - mu
    var = (xc * xc).mean(axis=(0, 1))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + shift.data

    def back(g):
        gx = None
        if x.requires_grad:
            gxhat = g * gd
            s1 = gxhat.sum(axis=(0, 1))
            s2 = (gxhat * xhat).sum(axis=(0, 1))
            gx = (inv / n) * (n * gxhat - s1 - xhat * s2)
        ggain = (g * xhat).sum(axis=(0, 1)) if gain.requires_grad else None
        gshift = g.sum(axis=(0, 1)) if shift.requires_grad else None
        return gx, ggain, gshift

    return Tensor._result(out, (x, gain, shift), back, op)


def instance_norm(x, gain, shift, eps=1e-5):
    """Per-channel spatial standardisation followed by ``gain * xhat + shift``."""
    return _spatial_norm(x, gain, shift, eps, "instance_norm")


def batch_norm(x, gain, shift, eps=1e-5):
    """Batch normalisation for a batch of one.

    With a single instance the batch statistics are the spatial statistics
    of that instance, so this computes exactly what :func:`instance_norm`
    does; it exists so discriminator layers carry their own label.
    """
    return _spatial_norm(x, gain, shift, eps, "batch_norm")


# --------------------------------------------------------------------------
# activations


def tanh(x):
    _check_finite(x.data)
    y = np.tanh(x.data)
    return Tensor._result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(x):
    _check_finite(x.data)
    mask = x.data >= 0  # right derivative at the kink
    return Tensor._result(np.where(mask, x.data, 0).astype(x.dtype), (x,),
                          lambda g: (g * mask,), "relu")


def leaky_relu(x, slope=0.2):
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    _check_finite(x.data)
    s = x.dtype.type(slope)
    factor = np.where(x.data > 0, x.dtype.type(1), s)  # slope at the kink
    return Tensor._result(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def activation(x, kind, slope=0.2):
    if kind == "tanh":
        return tanh(x)
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    raise ValueError(f"unknown activation {kind!r}")


def sigmoid(values):
    """Numerically stable logistic function on a plain array."""
    v = np.asarray(values, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -v))


# --------------------------------------------------------------------------
# losses


def bce_logits(logits, target):
    """Mean two-class softmax cross-entropy of each logit against a 0/1 label.

    For label 1 this is ``mean(softplus(-l))`` and for label 0
    ``mean(softplus(l))``, evaluated in log-sum-exp form.
    """
    if target not in (0, 1, True, False):
        raise ValueError("target must be 0 or 1")
    n = logits.size
    if n == 0:
        raise DimensionError("bce_logits: empty logits")
    _check_finite(logits.data)
    ld = logits.data
    sign = -1.0 if target else 1.0
    z = sign * ld
    loss = np.asarray(np.logaddexp(0.0, z).mean(), dtype=ld.dtype)

    def back(g):
        # d softplus(z)/dz = sigmoid(z)
        sz = np.exp(-np.logaddexp(0.0, -z)).astype(ld.dtype)
        return (g * sign * sz / n,)

    return Tensor._result(loss, (logits,), back, "bce_logits")


def l1_loss(a, b):
    """Mean absolute difference; the subgradient at ties is zero."""
    if a.shape != b.shape:
        raise DimensionError(f"l1_loss: shapes {a.shape} and {b.shape} differ")
    _check_finite(a.data, b.data)
    diff = a.data - b.data
    n = diff.size
    sgn = np.sign(diff)
    loss = np.asarray(np.abs(diff).mean(), dtype=diff.dtype)
    return Tensor._result(loss, (a, b), lambda g: (g * sgn / n, -g * sgn / n), "l1_loss")


# --------------------------------------------------------------------------
# finite-difference gradient checking


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self):
        return self.max_error < self.tol

    def __str__(self):
        worst = max(self.errors, key=self.errors.get) if self.errors else "-"
        status = "ok" if self.passed else "FAILED"
        return f"grad check {status}: max rel. error {self.max_error:.3e} ({worst}), tol {self.tol:g}"


def relative_error(analytic, numeric, floor=1e-12):
    """``|a - n| / max(|a| + |n|, floor)``; the floor keeps exactly-zero
    gradients (e.g. a bias feeding a normalisation) from comparing round-off
    against round-off."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def grad_check(f, params, eps=1e-5, tol=1e-4):
    """Compare backward gradients of ``f()`` with central differences.

    ``params`` maps names to leaf tensors (64-bit for meaningful results).
    Each parameter's error is :func:`relative_error` of its flattened
    gradients, with the floor set to 1e-6 of the largest gradient norm in
    the check so parameters whose true gradient is zero are judged on the
    scale of the whole problem.
    """
    if not hasattr(params, "items"):
        params = {str(i): p for i, p in enumerate(params)}
    loss = f()
    backward(loss, params)
    pairs = {}
    for name, p in params.items():
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.data, dtype=np.float64)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f().item()
            flat[i] = orig - eps
            fm = f().item()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * eps)
        pairs[name] = (analytic, numeric)
    scale = max((np.linalg.norm(a) + np.linalg.norm(n) for a, n in pairs.values()), default=0.0)
    floor = max(1e-6 * scale, 1e-12)
    report = GradCheckReport(tol=tol)
    for name, (a, n) in pairs.items():
        report.errors[name] = relative_error(a, n, floor)
    return report
