"""Layer-list CNN description, shape checking, and batched forward/backward."""

from dataclasses import dataclass, field

import numpy as np

from ..conv import ConvGeometry, avg_pool_batch, col2im_batch, conv2d_batch, im2col_batch, max_pool_batch, output_dims
from ..errors import ShapeInconsistency
from ..tensor import DenseTensor, contract_arrays


@dataclass(frozen=True)
class Conv:
    name: str
    kernel: str
    bias: str = None
    stride: tuple = (1, 1)
    pad: tuple = (0, 0)


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class AvgPool:
    window: int
    stride: int


@dataclass(frozen=True)
class MaxPool:
    window: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    name: str
    weight: str
    bias: str = None


@dataclass(frozen=True)
class Softmax:
    pass


@dataclass
class ModelSpec:
    """Ordered layers plus named parameter tensors.

    ``input_shape`` is (C, H, W) of one sample; it may be None only for a
    model with no layers.
    """

    layers: tuple = ()
    params: dict = field(default_factory=dict)
    input_shape: tuple = None

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.params = {k: v if isinstance(v, DenseTensor) else DenseTensor(v) for k, v in self.params.items()}
        if self.input_shape is not None:
            self.input_shape = tuple(int(d) for d in self.input_shape)

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            self.layers == other.layers
            and self.input_shape == other.input_shape
            and list(self.params) == list(other.params)
            and all(self.params[k] == other.params[k] for k in self.params)
        )

    def layer(self, name):
        for lay in self.layers:
            if getattr(lay, "name", None) == name:
                return lay
        raise KeyError(f"no layer named {name!r}")

    def conv_layers(self):
        return [lay for lay in self.layers if isinstance(lay, Conv)]

    def with_params(self, updates):
        params = dict(self.params)
        for k, v in updates.items():
            if k not in params:
                raise KeyError(k)
            params[k] = v if isinstance(v, DenseTensor) else DenseTensor(v)
        return ModelSpec(self.layers, params, self.input_shape)

    def geometry(self, conv):
        k = self.params[conv.kernel]
        return ConvGeometry(k.dims[2], k.dims[3], conv.stride[0], conv.stride[1], conv.pad[0], conv.pad[1])


# --- canonical text form ----------------------------------------------------


def _pair_text(p):
    return f"{p[0]},{p[1]}"


def layers_to_text(model):
    lines = []
    if model.input_shape is not None:
        lines.append("input " + " ".join(str(d) for d in model.input_shape))
    for lay in model.layers:
        if isinstance(lay, Conv):
            bias = f" bias={lay.bias}" if lay.bias else ""
            lines.append(
                f"conv {lay.name} kernel={lay.kernel}{bias} "
                f"stride={_pair_text(lay.stride)} pad={_pair_text(lay.pad)}"
            )
        elif isinstance(lay, Dense):
            bias = f" bias={lay.bias}" if lay.bias else ""
            lines.append(f"dense {lay.name} weight={lay.weight}{bias}")
        elif isinstance(lay, (AvgPool, MaxPool)):
            kind = "avg_pool" if isinstance(lay, AvgPool) else "max_pool"
            lines.append(f"{kind} window={lay.window} stride={lay.stride}")
        elif isinstance(lay, Relu):
            lines.append("relu")
        elif isinstance(lay, Flatten):
            lines.append("flatten")
        elif isinstance(lay, Softmax):
            lines.append("softmax")
        else:
            raise TypeError(f"unknown layer {lay!r}")
    return "".join(line + "\n" for line in lines)


def _int_pair(text):
    a, b = text.split(",")
    return (int(a), int(b))


def text_to_layers(text):
    """Parse the canonical layer block; returns (layers, input_shape)."""
    layers, input_shape = [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        words = line.split()
        if not words:
            continue
        kind, rest = words[0], words[1:]
        pos = [w for w in rest if "=" not in w]
        kv = dict(w.split("=", 1) for w in rest if "=" in w)
        try:
            if kind == "input":
                input_shape = tuple(int(w) for w in pos)
            elif kind == "conv":
                layers.append(Conv(pos[0], kv["kernel"], kv.get("bias"), _int_pair(kv["stride"]), _int_pair(kv["pad"])))
            elif kind == "dense":
                layers.append(Dense(pos[0], kv["weight"], kv.get("bias")))
            elif kind == "avg_pool":
                layers.append(AvgPool(int(kv["window"]), int(kv["stride"])))
            elif kind == "max_pool":
                layers.append(MaxPool(int(kv["window"]), int(kv["stride"])))
            elif kind == "relu":
                layers.append(Relu())
            elif kind == "flatten":
                layers.append(Flatten())
            elif kind == "softmax":
                layers.append(Softmax())
            else:
                raise ShapeInconsistency(f"layer line {lineno}: unknown layer kind {kind!r}")
        except (KeyError, IndexError, ValueError) as exc:
            if isinstance(exc, ShapeInconsistency):
                raise
            raise ShapeInconsistency(f"layer line {lineno}: malformed {line!r}") from exc
    return tuple(layers), input_shape


# --- shape checking ---------------------------------------------------------


def check_shapes(model):
    """Propagate the activation shape through every layer; returns the output shape."""
    if not model.layers:
        return model.input_shape
    if model.input_shape is None:
        raise ShapeInconsistency("model with layers needs an input shape")
    shape = model.input_shape

    def need(name, dims, what):
        if name not in model.params:
            raise ShapeInconsistency(f"{what}: parameter {name!r} missing")
        got = model.params[name].dims
        if dims is not None and got != tuple(dims):
            raise ShapeInconsistency(f"{what}: parameter {name!r} has dims {got}, expected {tuple(dims)}")
        return got

    for i, lay in enumerate(model.layers):
        what = f"layer {i} ({type(lay).__name__})"
        try:
            if isinstance(lay, Conv):
                if len(shape) != 3:
                    raise ShapeInconsistency(f"{what}: conv needs a (C,H,W) input, got {shape}")
                kd = need(lay.kernel, None, what)
                if len(kd) != 4 or kd[1] != shape[0]:
                    raise ShapeInconsistency(f"{what}: kernel dims {kd} do not accept {shape[0]} channels")
                if lay.bias:
                    need(lay.bias, (kd[0],), what)
                ho, wo = output_dims(model.geometry(lay), shape[1], shape[2])
                shape = (kd[0], ho, wo)
            elif isinstance(lay, (AvgPool, MaxPool)):
                ho, wo = output_dims(ConvGeometry.square(lay.window, lay.stride), shape[1], shape[2])
                shape = (shape[0], ho, wo)
            elif isinstance(lay, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(lay, Dense):
                if len(shape) != 1:
                    raise ShapeInconsistency(f"{what}: dense needs a flat input, got {shape}")
                wd = need(lay.weight, None, what)
                if len(wd) != 2 or wd[1] != shape[0]:
                    raise ShapeInconsistency(f"{what}: weight dims {wd} do not accept {shape[0]} features")
                if lay.bias:
                    need(lay.bias, (wd[0],), what)
                shape = (wd[0],)
        except ShapeInconsistency:
            raise
        except ValueError as exc:
            raise ShapeInconsistency(f"{what}: {exc}") from exc
    return shape


# --- forward / backward -----------------------------------------------------


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model, x, cache=None):
    """Run a batch (N, C, H, W) through the model; returns the final activations.

    When ``cache`` is a list it receives what :func:`backward` needs.
    """
    p = {k: v.array for k, v in model.params.items()}
    for lay in model.layers:
        if isinstance(lay, Conv):
            g = model.geometry(lay)
            patches = im2col_batch(x, g)
            y = conv2d_batch(x, p[lay.kernel], g, p[lay.bias] if lay.bias else None, patches=patches)
            saved = (patches, x.shape)
        elif isinstance(lay, Relu):
            y = np.maximum(x, 0.0)
            saved = x > 0
        elif isinstance(lay, AvgPool):
            y = avg_pool_batch(x, lay.window, lay.stride)
            saved = x.shape
        elif isinstance(lay, MaxPool):
            g = ConvGeometry.square(lay.window, lay.stride)
            patches = im2col_batch(x, g)
            flat = patches.reshape(patches.shape[:4] + (-1,))
            arg = flat.argmax(axis=-1)
            y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0].transpose(0, 3, 1, 2).copy()
            saved = (arg, patches.shape, x.shape)
        elif isinstance(lay, Flatten):
            saved = x.shape
            y = x.reshape(x.shape[0], -1)
        elif isinstance(lay, Dense):
            y = contract_arrays([x, p[lay.weight]], "nf,of->no")
            if lay.bias:
                y = y + p[lay.bias][None, :]
            saved = x
        elif isinstance(lay, Softmax):
            y = _softmax(x)
            saved = y
        else:
            raise TypeError(f"unknown layer {lay!r}")
        if cache is not None:
            cache.append(saved)
        x = y
    return x


def backward(model, cache, grad_out, softmax_grad_is_logit_grad=False):
    """Backpropagate ``grad_out`` (gradient w.r.t. the model output).

    With ``softmax_grad_is_logit_grad`` a trailing softmax layer is skipped and
    ``grad_out`` is taken as the gradient w.r.t. its input (fused cross entropy).
    Returns {param name: gradient ndarray}.
    """
    p = {k: v.array for k, v in model.params.items()}
    grads = {}
    g_cur = grad_out
    for lay, saved in zip(reversed(model.layers), reversed(cache)):
        if isinstance(lay, Conv):
            patches, xshape = saved
            geom = model.geometry(lay)
            grads[lay.kernel] = contract_arrays([g_cur, patches], "noij,nijcab->ocab")
            if lay.bias:
                grads[lay.bias] = g_cur.sum(axis=(0, 2, 3))
            dcols = contract_arrays([g_cur, p[lay.kernel]], "noij,ocab->nijcab")
            g_cur = col2im_batch(dcols, geom, xshape[2], xshape[3])
        elif isinstance(lay, Relu):
            g_cur = g_cur * saved
        elif isinstance(lay, AvgPool):
            xshape = saved
            geom = ConvGeometry.square(lay.window, lay.stride)
            share = g_cur.transpose(0, 2, 3, 1) / (lay.window * lay.window)
            dcols = np.broadcast_to(share[..., None, None], share.shape + (lay.window, lay.window))
            g_cur = col2im_batch(dcols, geom, xshape[2], xshape[3])
        elif isinstance(lay, MaxPool):
            arg, pshape, xshape = saved
            geom = ConvGeometry.square(lay.window, lay.stride)
            flat = np.zeros(pshape[:4] + (pshape[4] * pshape[5],))
            np.put_along_axis(flat, arg[..., None], g_cur.transpose(0, 2, 3, 1)[..., None], axis=-1)
            g_cur = col2im_batch(flat.reshape(pshape), geom, xshape[2], xshape[3])
        elif isinstance(lay, Flatten):
            g_cur = g_cur.reshape(saved)
        elif isinstance(lay, Dense):
            x = saved
            grads[lay.weight] = contract_arrays([g_cur, x], "no,nf->of")
            if lay.bias:
                grads[lay.bias] = g_cur.sum(axis=0)
            g_cur = contract_arrays([g_cur, p[lay.weight]], "no,of->nf")
        elif isinstance(lay, Softmax):
            if softmax_grad_is_logit_grad:
                softmax_grad_is_logit_grad = False
                continue
            y = saved
            g_cur = y * (g_cur - np.sum(g_cur * y, axis=1, keepdims=True))
    return grads


def loss_and_grads(model, x, labels):
    """Mean cross entropy of the softmax output and its parameter gradients."""
    if not model.layers or not isinstance(model.layers[-1], Softmax):
        raise ShapeInconsistency("training needs a model ending in softmax")
    cache = []
    probs = forward(model, x, cache)
    n = x.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, backward(model, cache, dlogits, softmax_grad_is_logit_grad=True)


def toy_architecture(input_shape=(1, 16, 16), classes=4, seed=0):
    """conv(5x5, pad 2) -> relu -> avg_pool -> conv(3x3, pad 1) -> relu -> avg_pool
    -> flatten -> dense -> softmax, He-initialised from ``seed``."""
    c, h, w = input_shape
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

    feat = 16 * (h // 4) * (w // 4)
    params = {
        "conv1.weight": he((8, c, 5, 5), c * 25),
        "conv1.bias": np.zeros(8),
        "conv2.weight": he((16, 8, 3, 3), 8 * 9),
        "conv2.bias": np.zeros(16),
        "fc.weight": rng.normal(0.0, np.sqrt(1.0 / feat), size=(classes, feat)),
        "fc.bias": np.zeros(classes),
    }
    layers = (
        Conv("conv1", "conv1.weight", "conv1.bias", (1, 1), (2, 2)),
        Relu(),
        AvgPool(2, 2),
        Conv("conv2", "conv2.weight", "conv2.bias", (1, 1), (1, 1)),
        Relu(),
        AvgPool(2, 2),
        Flatten(),
        Dense("fc", "fc.weight", "fc.bias"),
        Softmax(),
    )
    model = ModelSpec(layers, params, input_shape)
    check_shapes(model)
    return model


def replace_kernel(model, layer_name, kernel):
    conv = model.layer(layer_name)
    return model.with_params({conv.kernel: kernel})


__all__ = [
    "AvgPool", "Conv", "Dense", "Flatten", "MaxPool", "ModelSpec", "Relu", "Softmax",
    "backward", "check_shapes", "forward", "layers_to_text", "loss_and_grads",
    "replace_kernel", "text_to_layers", "toy_architecture",
]
