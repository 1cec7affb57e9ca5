"""
Functional Kernels
Differentiable kernels every model component is built from.

All kernels take and return `Tensor`; constants are wrapped on the fly.
Spatial kernels work on unbatched C x H x W maps.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from wrcfusion.core.profiler import record_macs
from wrcfusion.core.tensor import ArrayLike, Function, Tensor, as_tensor
from wrcfusion.errors import ConfigurationError, DimensionError, NumericError

Axis = Optional[Union[int, Tuple[int, ...]]]
Pair = Union[int, Tuple[int, int]]


def _pair(value: Pair) -> Tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for tensor of rank {ndim}")
    return axis % ndim


# ---------- elementwise arithmetic ----------
class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.tensors
        return self.unbroadcast(grad, a.shape), self.unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        a, b = self.tensors
        return self.unbroadcast(grad, a.shape), self.unbroadcast(-grad, b.shape)


class Mul(Function):
    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.tensors
        return (self.unbroadcast(grad * b.data, a.shape),
                self.unbroadcast(grad * a.data, b.shape))


class Div(Function):
    def forward(self, a, b):
        return a / b

    def backward(self, grad):
        a, b = self.tensors
        return (self.unbroadcast(grad / b.data, a.shape),
                self.unbroadcast(-grad * a.data / (b.data ** 2), b.shape))


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Power(Function):
    def forward(self, a, exponent):
        self.saved["exponent"] = exponent
        return a ** exponent

    def backward(self, grad):
        (a,) = self.tensors
        p = self.saved["exponent"]
        return (grad * p * a.data ** (p - 1),)


class Exp(Function):
    def forward(self, a):
        out = np.exp(a)
        self.saved["out"] = out
        return out

    def backward(self, grad):
        return (grad * self.saved["out"],)


class Log(Function):
    def forward(self, a):
        return np.log(a)

    def backward(self, grad):
        (a,) = self.tensors
        return (grad / a.data,)


class Abs(Function):
    def forward(self, a):
        return np.abs(a)

    def backward(self, grad):
        (a,) = self.tensors
        return (grad * np.sign(a.data),)


class Clamp(Function):
    def forward(self, a, lo, hi):
        self.saved["mask"] = (a >= lo) & (a <= hi)
        return np.clip(a, lo, hi)

    def backward(self, grad):
        return (grad * self.saved["mask"],)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    return Div.apply(as_tensor(a), as_tensor(b))


def neg(a: ArrayLike) -> Tensor:
    return Neg.apply(as_tensor(a))


def power(a: ArrayLike, exponent: float) -> Tensor:
    return Power.apply(as_tensor(a), exponent=float(exponent))


def exp(a: ArrayLike) -> Tensor:
    return Exp.apply(as_tensor(a))


def log(a: ArrayLike) -> Tensor:
    return Log.apply(as_tensor(a))


def abs_(a: ArrayLike) -> Tensor:
    return Abs.apply(as_tensor(a))


def clamp(a: ArrayLike, lo: float, hi: float) -> Tensor:
    return Clamp.apply(as_tensor(a), lo=float(lo), hi=float(hi))


# ---------- activations ----------
class Sigmoid(Function):
    def forward(self, a):
        e = np.exp(-np.abs(a))
        out = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        self.saved["out"] = out
        return out

    def backward(self, grad):
        out = self.saved["out"]
        return (grad * out * (1.0 - out),)


class ReLU(Function):
    def forward(self, a):
        self.saved["mask"] = a > 0
        return np.where(a > 0, a, 0.0)

    def backward(self, grad):
        return (grad * self.saved["mask"],)


class Softmax(Function):
    def forward(self, a, axis):
        shifted = a - a.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)
        self.saved.update(out=out, axis=axis)
        return out

    def backward(self, grad):
        out, axis = self.saved["out"], self.saved["axis"]
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, a, axis):
        shifted = a - a.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = shifted - lse
        self.saved.update(out=out, axis=axis)
        return out

    def backward(self, grad):
        out, axis = self.saved["out"], self.saved["axis"]
        return (grad - np.exp(out) * grad.sum(axis=axis, keepdims=True),)


class LayerNormalize(Function):
    """(x - mean) / sqrt(var + eps) over the last axis."""

    def forward(self, a, eps):
        mu = a.mean(axis=-1, keepdims=True)
        var = a.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        out = (a - mu) * inv
        self.saved.update(out=out, inv=inv)
        return out

    def backward(self, grad):
        out, inv = self.saved["out"], self.saved["inv"]
        g_mean = grad.mean(axis=-1, keepdims=True)
        gy_mean = (grad * out).mean(axis=-1, keepdims=True)
        return (inv * (grad - g_mean - out * gy_mean),)


def sigmoid(a: ArrayLike) -> Tensor:
    return Sigmoid.apply(as_tensor(a))


def relu(a: ArrayLike) -> Tensor:
    return ReLU.apply(as_tensor(a))


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    return Softmax.apply(a, axis=_check_axis(axis, a.ndim))


def log_softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    return LogSoftmax.apply(a, axis=_check_axis(axis, a.ndim))


def layer_norm(a: ArrayLike, weight: Optional[Tensor] = None, bias: Optional[Tensor] = None,
               eps: float = 1e-12) -> Tensor:
    """
    Layer normalization over the last axis with optional affine parameters.

    Args:
        a: Input tensor.
        weight: Per-feature scale (last-axis sized).
        bias: Per-feature shift (last-axis sized).
        eps: Variance floor.

    Returns:
        Tensor: Normalized tensor of the input shape.
    """
    out = LayerNormalize.apply(as_tensor(a), eps=float(eps))
    if weight is not None:
        out = mul(out, weight)
    if bias is not None:
        out = add(out, bias)
    return out


# ---------- reductions ----------
class Sum(Function):
    def forward(self, a, axis, keepdims):
        self.saved.update(axis=axis, keepdims=keepdims)
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        (a,) = self.tensors
        axis, keepdims = self.saved["axis"], self.saved["keepdims"]
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)


class Max(Function):
    def forward(self, a, axis, keepdims):
        idx = np.argmax(a, axis=axis)
        self.saved.update(axis=axis, keepdims=keepdims, idx=idx)
        return np.asarray(a.max(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        (a,) = self.tensors
        axis, keepdims, idx = self.saved["axis"], self.saved["keepdims"], self.saved["idx"]
        out = np.zeros_like(a.data)
        if axis is None:
            out.reshape(-1)[idx] = np.asarray(grad).reshape(-1)[0]
            return (out,)
        if keepdims:
            grad = np.squeeze(grad, axis=axis)
        np.put_along_axis(out, np.expand_dims(idx, axis), np.expand_dims(grad, axis), axis=axis)
        return (out,)


class Variance(Function):
    def forward(self, a, axis, keepdims):
        mu = a.mean(axis=axis, keepdims=True)
        self.saved.update(axis=axis, keepdims=keepdims, centered=a - mu)
        return np.asarray(a.var(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        (a,) = self.tensors
        axis, keepdims, centered = self.saved["axis"], self.saved["keepdims"], self.saved["centered"]
        n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (2.0 * centered * grad / n,)


def _norm_axis(axis: Axis, ndim: int) -> Axis:
    if axis is None:
        return None
    if isinstance(axis, (tuple, list)):
        return tuple(_check_axis(ax, ndim) for ax in axis)
    return _check_axis(axis, ndim)


def sum(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return Sum.apply(a, axis=_norm_axis(axis, a.ndim), keepdims=keepdims)


def mean(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    n = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return div(sum(a, axis=axis, keepdims=keepdims), float(n))


def max(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return Max.apply(a, axis=None if axis is None else _check_axis(axis, a.ndim), keepdims=keepdims)


def variance(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    return Variance.apply(a, axis=_norm_axis(axis, a.ndim), keepdims=keepdims)


# ---------- shape manipulation ----------
class Reshape(Function):
    def forward(self, a, shape):
        return a.reshape(shape)

    def backward(self, grad):
        (a,) = self.tensors
        return (grad.reshape(a.shape),)


class Transpose(Function):
    def forward(self, a, axes):
        self.saved["axes"] = axes
        return np.transpose(a, axes)

    def backward(self, grad):
        axes = self.saved["axes"]
        if axes is None:
            return (np.transpose(grad),)
        return (np.transpose(grad, np.argsort(axes)),)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


class GetItem(Function):
    def forward(self, a, index):
        self.saved["index"] = index
        return np.array(a[index], dtype=np.float64)

    def backward(self, grad):
        (a,) = self.tensors
        index = self.saved["index"]
        out = np.zeros_like(a.data)
        if _is_basic_index(index):
            out[index] += grad
        else:
            np.add.at(out, index, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis):
        self.saved["splits"] = np.cumsum([arr.shape[axis] for arr in arrays])[:-1]
        self.saved["axis"] = axis
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.saved["splits"], axis=self.saved["axis"]))


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        np.empty(a.shape).reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} into {shape}") from None
    return Reshape.apply(a, shape=shape)


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is not None:
        axes = tuple(_check_axis(ax, a.ndim) for ax in axes)
    return Transpose.apply(a, axes=axes)


def getitem(a: ArrayLike, index) -> Tensor:
    return GetItem.apply(as_tensor(a), index=index)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    axis = _check_axis(axis, tensors[0].ndim)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis):
            raise DimensionError(f"concat shape mismatch on axis {axis}: {ref} vs {t.shape}")
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


# ---------- linear algebra ----------
class MatMul(Function):
    def forward(self, a, b):
        record_macs(a.shape[0] * a.shape[1] * b.shape[1])
        return a @ b

    def backward(self, grad):
        a, b = self.tensors
        return grad @ b.data.T, a.data.T @ grad


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Matrix product of an M x K and a K x N tensor.

    Raises:
        DimensionError: Inputs are not 2-D or inner dimensions disagree.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return MatMul.apply(a, b)


# ---------- convolution ----------
class Conv2d(Function):
    def forward(self, x, w, *bias, stride, padding, dilation, groups):
        c_in, h, wd = x.shape
        c_out, cg, kh, kw = w.shape
        (sh, sw), (ph, pw), (dh, dw) = stride, padding, dilation
        og = c_out // groups
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
        eff_h, eff_w = (kh - 1) * dh + 1, (kw - 1) * dw + 1
        ho = (h + 2 * ph - eff_h) // sh + 1
        wo = (wd + 2 * pw - eff_w) // sw + 1
        win = sliding_window_view(xp, (eff_h, eff_w), axis=(1, 2))
        win = win[:, ::sh, ::sw, ::dh, ::dw][:, :ho, :wo]
        cols = win.reshape(groups, cg, ho, wo, kh, kw).transpose(0, 1, 4, 5, 2, 3)
        cols = np.ascontiguousarray(cols).reshape(groups, cg * kh * kw, ho * wo)
        wg = w.reshape(groups, og, cg * kh * kw)
        out = np.matmul(wg, cols).reshape(c_out, ho, wo)
        if bias:
            out = out + bias[0][:, None, None]
        record_macs(c_out * ho * wo * cg * kh * kw)
        self.saved.update(cols=cols, shape=(c_in, h, wd), xp_shape=xp.shape, out_hw=(ho, wo),
                          stride=stride, padding=padding, dilation=dilation, groups=groups)
        return out

    def backward(self, grad):
        x, w = self.tensors[0], self.tensors[1]
        s = self.saved
        groups, (ho, wo) = s["groups"], s["out_hw"]
        (sh, sw), (ph, pw), (dh, dw) = s["stride"], s["padding"], s["dilation"]
        c_out, cg, kh, kw = w.shape
        og = c_out // groups
        gg = grad.reshape(groups, og, ho * wo)
        dw_ = np.matmul(gg, s["cols"].transpose(0, 2, 1)).reshape(w.shape)
        wg = w.data.reshape(groups, og, cg * kh * kw)
        dcols = np.matmul(wg.transpose(0, 2, 1), gg).reshape(groups * cg, kh, kw, ho, wo)
        dxp = np.zeros(s["xp_shape"])
        for i in range(kh):
            for j in range(kw):
                dxp[:, i * dh:i * dh + sh * (ho - 1) + 1:sh, j * dw:j * dw + sw * (wo - 1) + 1:sw] += dcols[:, i, j]
        _, h, wd = s["shape"]
        dx = dxp[:, ph:ph + h, pw:pw + wd]
        grads = [dx, dw_]
        if len(self.tensors) == 3:
            grads.append(grad.sum(axis=(1, 2)))
        return tuple(grads)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: Pair = 1,
           padding: Pair = 0, dilation: Pair = 1, groups: int = 1) -> Tensor:
    """
    2-D convolution of a C_in x H x W map.

    Args:
        x: Input map.
        weight: Kernel of shape (C_out, C_in / groups, kh, kw).
        bias: Optional per-output-channel bias.
        stride: Step between output samples.
        padding: Zero padding on each border.
        dilation: Kernel tap spacing (>= 1).
        groups: Channel groups; C_in and C_out must both be divisible.

    Returns:
        Tensor: C_out x H' x W' map.

    Raises:
        ConfigurationError: Channel/group mismatch or invalid stride/dilation.
        DimensionError: Input is not 3-D or kernel larger than padded input.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects C x H x W input and 4-D weight, got {x.shape} and {weight.shape}")
    stride, padding, dilation = _pair(stride), _pair(padding), _pair(dilation)
    c_in = x.shape[0]
    c_out, cg = weight.shape[:2]
    if groups < 1 or c_in % groups or c_out % groups or cg * groups != c_in:
        raise ConfigurationError(f"conv2d channel/group mismatch: C_in={c_in}, C_out={c_out}, "
                                 f"groups={groups}, weight {weight.shape}")
    if min(dilation) < 1 or min(stride) < 1 or min(padding) < 0:
        raise ConfigurationError(f"conv2d needs stride >= 1, dilation >= 1, padding >= 0; "
                                 f"got {stride}, {dilation}, {padding}")
    eff_h = (weight.shape[2] - 1) * dilation[0] + 1
    eff_w = (weight.shape[3] - 1) * dilation[1] + 1
    if x.shape[1] + 2 * padding[0] < eff_h or x.shape[2] + 2 * padding[1] < eff_w:
        raise DimensionError(f"conv2d kernel extent {(eff_h, eff_w)} exceeds padded input {x.shape[1:]}")
    inputs = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return Conv2d.apply(*inputs, stride=stride, padding=padding, dilation=dilation, groups=groups)


# ---------- pooling / resampling ----------
class AdaptiveMaxPool2d(Function):
    def forward(self, x, out_h, out_w):
        c, h, w = x.shape
        out = np.empty((c, out_h, out_w))
        rows = np.empty((c, out_h, out_w), dtype=np.int64)
        cols = np.empty((c, out_h, out_w), dtype=np.int64)
        for i in range(out_h):
            hs, he = (i * h) // out_h, -(-((i + 1) * h) // out_h)
            for j in range(out_w):
                ws, we = (j * w) // out_w, -(-((j + 1) * w) // out_w)
                window = x[:, hs:he, ws:we].reshape(c, -1)
                flat = window.argmax(axis=1)
                out[:, i, j] = window[np.arange(c), flat]
                rows[:, i, j] = hs + flat // (we - ws)
                cols[:, i, j] = ws + flat % (we - ws)
        self.saved.update(rows=rows, cols=cols)
        return out

    def backward(self, grad):
        (x,) = self.tensors
        c = x.shape[0]
        out = np.zeros_like(x.data)
        chan = np.broadcast_to(np.arange(c)[:, None, None], grad.shape)
        np.add.at(out, (chan, self.saved["rows"], self.saved["cols"]), grad)
        return (out,)


def adaptive_max_pool2d(x: ArrayLike, out_h: int, out_w: int) -> Tensor:
    """
    Adaptive max-pooling of a C x H x W map to C x out_h x out_w.

    Window i spans rows floor(i*H/out_h) .. ceil((i+1)*H/out_h); the gradient
    goes to the first maximal element of each window.

    Raises:
        ConfigurationError: Requested output larger than the input.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"adaptive_max_pool2d expects C x H x W, got {x.shape}")
    if not (1 <= out_h <= x.shape[1] and 1 <= out_w <= x.shape[2]):
        raise ConfigurationError(f"adaptive_max_pool2d output {(out_h, out_w)} exceeds input {x.shape[1:]}")
    return AdaptiveMaxPool2d.apply(x, out_h=int(out_h), out_w=int(out_w))


class BilinearSample(Function):
    def forward(self, feat, points):
        c, h, w = feat.shape
        x = points[:, 0] * w - 0.5
        y = points[:, 1] * h - 0.5
        inside_x = (x >= 0) & (x <= w - 1)
        inside_y = (y >= 0) & (y <= h - 1)
        x = np.clip(x, 0, w - 1)
        y = np.clip(y, 0, h - 1)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        wx = (x - x0)[:, None]
        wy = (y - y0)[:, None]
        f00, f01 = feat[:, y0, x0].T, feat[:, y0, x1].T
        f10, f11 = feat[:, y1, x0].T, feat[:, y1, x1].T
        out = (1 - wy) * ((1 - wx) * f00 + wx * f01) + wy * ((1 - wx) * f10 + wx * f11)
        self.saved.update(idx=(x0, x1, y0, y1), wx=wx, wy=wy, corners=(f00, f01, f10, f11),
                          inside=(inside_x, inside_y))
        return out

    def backward(self, grad):
        feat, points = self.tensors
        c, h, w = feat.shape
        x0, x1, y0, y1 = self.saved["idx"]
        wx, wy = self.saved["wx"], self.saved["wy"]
        gfeat = None
        if feat.requires_grad:
            gfeat = np.zeros_like(feat.data)
            for (ys, xs), weight in (((y0, x0), (1 - wy) * (1 - wx)), ((y0, x1), (1 - wy) * wx),
                                     ((y1, x0), wy * (1 - wx)), ((y1, x1), wy * wx)):
                chan = np.broadcast_to(np.arange(c)[None, :], grad.shape)
                np.add.at(gfeat, (chan, np.broadcast_to(ys[:, None], grad.shape),
                                  np.broadcast_to(xs[:, None], grad.shape)), grad * weight)
        gpoints = None
        if points.requires_grad:
            f00, f01, f10, f11 = self.saved["corners"]
            inside_x, inside_y = self.saved["inside"]
            dval_dx = (1 - wy) * (f01 - f00) + wy * (f11 - f10)
            dval_dy = (1 - wx) * (f10 - f00) + wx * (f11 - f01)
            gpoints = np.stack([(grad * dval_dx).sum(axis=1) * w * inside_x,
                                (grad * dval_dy).sum(axis=1) * h * inside_y], axis=1)
        return gfeat, gpoints


def bilinear_sample(feat: ArrayLike, points: ArrayLike) -> Tensor:
    """
    Sample a C x H x W map at normalized (u, v) points.

    u runs along the width and v along the height; cell (i, j) has its centre
    at ((j + 0.5) / W, (i + 0.5) / H). Out-of-range points clamp to the border.

    Args:
        feat: Feature map.
        points: P x 2 array or tensor of (u, v) coordinates.

    Returns:
        Tensor: P x C sampled features, differentiable in both inputs.

    Raises:
        NumericError: Non-finite point coordinates.
    """
    feat, points = as_tensor(feat), as_tensor(points)
    if feat.ndim != 3 or points.ndim != 2 or points.shape[1] != 2:
        raise DimensionError(f"bilinear_sample expects C x H x W and P x 2, got {feat.shape} and {points.shape}")
    if not np.all(np.isfinite(points.data)):
        raise NumericError("bilinear_sample received non-finite sample points")
    return BilinearSample.apply(feat, points)


class UpsampleNearest(Function):
    def forward(self, x, factor, size):
        self.saved["factor"] = factor
        out = np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)
        return out[:, :size[0], :size[1]]

    def backward(self, grad):
        (x,) = self.tensors
        c, h, w = x.shape
        f = self.saved["factor"]
        full = np.zeros((c, h * f, w * f))
        full[:, :grad.shape[1], :grad.shape[2]] = grad
        return (full.reshape(c, h, f, w, f).sum(axis=(2, 4)),)


def upsample_nearest(x: ArrayLike, size: Tuple[int, int], factor: int = 2) -> Tensor:
    """Nearest-neighbour upsampling by `factor`, cropped to `size`."""
    x = as_tensor(x)
    h, w = int(size[0]), int(size[1])
    if not (x.shape[1] * factor >= h > (x.shape[1] - 1) * factor and
            x.shape[2] * factor >= w > (x.shape[2] - 1) * factor):
        raise DimensionError(f"cannot upsample {x.shape[1:]} by {factor} to {(h, w)}")
    return UpsampleNearest.apply(x, factor=int(factor), size=(h, w))
