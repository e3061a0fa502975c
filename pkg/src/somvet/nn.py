"""Layered feed-forward network engine with manual backpropagation.

Supports the layer kinds needed for the 32x32 convolutional autoencoder:
dense, conv2d (same padding, stride 1), maxpool2d, upsample2d (nearest),
transposed-conv2d (upsample then conv), relu, flatten and reshape.
Parameters are single precision for training; pass dtype=np.float64 for
gradient checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

LAYER_KINDS = (
    "dense",
    "conv2d",
    "maxpool2d",
    "upsample2d",
    "transposed-conv2d",
    "relu",
    "flatten",
    "reshape",
)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    features is the unit count (dense) or output channel count (conv kinds);
    stride doubles as the window size for maxpool2d and the scale factor for
    upsample2d / transposed-conv2d; shape is the reshape target (c, h, w).
    """

    kind: str
    features: int = 0
    kernel_size: int = 0
    stride: int = 1
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "conv2d", "transposed-conv2d") and self.features < 1:
            raise ValueError(f"{self.kind} needs features >= 1")
        if self.kind in ("conv2d", "transposed-conv2d"):
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise ValueError(f"{self.kind} needs an odd kernel_size >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.features:
            d["features"] = self.features
        if self.kernel_size:
            d["kernel_size"] = self.kernel_size
        if self.stride != 1:
            d["stride"] = self.stride
        if self.shape:
            d["shape"] = list(self.shape)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "LayerSpec":
        return cls(
            kind=d["kind"],
            features=d.get("features", 0),
            kernel_size=d.get("kernel_size", 0),
            stride=d.get("stride", 1),
            shape=tuple(d.get("shape", ())),
        )


@dataclass(frozen=True)
class Batch:
    """Validated training batch: stamp pixels plus targets.

    Targets default to the inputs (autoencoding); a 1-d array of labels is
    accepted for supervised use.
    """

    inputs: np.ndarray
    targets: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        x = np.asarray(self.inputs)
        if x.ndim != 3 or x.shape[1:] != (32, 32):
            raise ValueError(f"batch inputs must be (n, 32, 32), got {x.shape}")
        if x.shape[0] < 1:
            raise ValueError("batch must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("batch inputs contain non-finite values")
        if x.min() < 0.0 or x.max() > 1.0:
            raise ValueError("batch inputs must lie in [0, 1]")
        t = self.targets
        if t is None:
            t = x
        else:
            t = np.asarray(t)
            if t.shape != x.shape and t.shape != (x.shape[0],):
                raise ValueError("targets must match inputs or be one label per sample")
            if not np.all(np.isfinite(t)):
                raise ValueError("batch targets contain non-finite values")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", t)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def _glorot(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class _Dense:
    has_params = True

    def __init__(self, spec, in_shape, rng, dtype):
        if len(in_shape) != 1:
            raise ValueError(f"dense layer needs a vector input, got shape {in_shape}")
        fan_in, fan_out = in_shape[0], spec.features
        self.w = _glorot(rng, fan_in, fan_out, (fan_in, fan_out), dtype)
        self.b = np.zeros(fan_out, dtype=dtype)
        self.out_shape = (fan_out,)
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, gy):
        self.gw = self._x.T @ gy
        self.gb = gy.sum(axis=0)
        return gy @ self.w.T

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]


class _Conv2D:
    has_params = True

    def __init__(self, spec, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ValueError(f"conv2d needs a (c, h, w) input, got shape {in_shape}")
        ci, h, w = in_shape
        k = spec.kernel_size
        if k > h or k > w:
            raise ValueError(f"kernel size {k} exceeds input extent {h}x{w}")
        if spec.stride != 1:
            raise ValueError("conv2d supports stride 1 only")
        co = spec.features
        fan_in, fan_out = ci * k * k, co * k * k
        self.w = _glorot(rng, fan_in, fan_out, (co, ci, k, k), dtype)
        self.b = np.zeros(co, dtype=dtype)
        self.k = k
        self.pad = k // 2
        self.out_shape = (co, h, w)
        self._xp = None

    def forward(self, x):
        p = self.pad
        self._xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        return kernels.conv2d_valid(self._xp, self.w, self.b)

    def backward(self, gy):
        p = self.pad
        hp, wp = self._xp.shape[2], self._xp.shape[3]
        self.gw, self.gb = kernels.conv2d_valid_grad_w(self._xp, gy, self.k)
        gxp = kernels.conv2d_valid_grad_x(self.w, gy, hp, wp)
        return gxp[:, :, p:hp - p, p:wp - p]

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]


class _MaxPool2D:
    has_params = False

    def __init__(self, spec, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ValueError("maxpool2d needs a (c, h, w) input")
        c, h, w = in_shape
        s = spec.stride
        if h % s or w % s:
            raise ValueError(f"maxpool2d window {s} does not divide {h}x{w}")
        self.s = s
        self.in_hw = (h, w)
        self.out_shape = (c, h // s, w // s)

    def forward(self, x):
        y, self._arg = kernels.maxpool2d_forward(x, self.s)
        return y

    def backward(self, gy):
        h, w = self.in_hw
        return kernels.maxpool2d_backward(gy, self._arg, h, w)


class _Upsample2D:
    has_params = False

    def __init__(self, spec, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise ValueError("upsample2d needs a (c, h, w) input")
        c, h, w = in_shape
        self.s = spec.stride
        self.out_shape = (c, h * self.s, w * self.s)

    def forward(self, x):
        return np.repeat(np.repeat(x, self.s, axis=2), self.s, axis=3)

    def backward(self, gy):
        n, c, oh, ow = gy.shape
        s = self.s
        return gy.reshape(n, c, oh // s, s, ow // s, s).sum(axis=(3, 5))


class _TransposedConv2D:
    """Upsample by the stride factor, then a same-padded convolution."""

    has_params = True

    def __init__(self, spec, in_shape, rng, dtype):
        self._up = _Upsample2D(LayerSpec("upsample2d", stride=spec.stride), in_shape, rng, dtype)
        conv_spec = LayerSpec("conv2d", features=spec.features, kernel_size=spec.kernel_size)
        self._conv = _Conv2D(conv_spec, self._up.out_shape, rng, dtype)
        self.out_shape = self._conv.out_shape

    def forward(self, x):
        return self._conv.forward(self._up.forward(x))

    def backward(self, gy):
        return self._up.backward(self._conv.backward(gy))

    def params(self):
        return self._conv.params()

    def grads(self):
        return self._conv.grads()


class _ReLU:
    has_params = False

    def __init__(self, spec, in_shape, rng, dtype):
        self.out_shape = in_shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, gy):
        return gy * self._mask


class _Flatten:
    has_params = False

    def __init__(self, spec, in_shape, rng, dtype):
        self.in_shape = in_shape
        self.out_shape = (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(gy.shape[0], *self.in_shape)


class _Reshape:
    has_params = False

    def __init__(self, spec, in_shape, rng, dtype):
        if int(np.prod(in_shape)) != int(np.prod(spec.shape)):
            raise ValueError(f"cannot reshape {in_shape} to {spec.shape}")
        self.in_shape = in_shape
        self.out_shape = tuple(spec.shape)

    def forward(self, x):
        return x.reshape(x.shape[0], *self.out_shape)

    def backward(self, gy):
        return gy.reshape(gy.shape[0], *self.in_shape)


_LAYER_CLASSES = {
    "dense": _Dense,
    "conv2d": _Conv2D,
    "maxpool2d": _MaxPool2D,
    "upsample2d": _Upsample2D,
    "transposed-conv2d": _TransposedConv2D,
    "relu": _ReLU,
    "flatten": _Flatten,
    "reshape": _Reshape,
}


class Network:
    """An ordered stack of layers with explicit forward/backward passes.

    Construction validates that layer shapes chain and initializes all
    parameters deterministically from the seed (Glorot-uniform weights,
    zero biases, drawn in declaration order).
    """

    def __init__(self, specs: Sequence[LayerSpec], input_shape, seed=0, dtype=np.float32):
        if isinstance(seed, np.random.Generator):
            rng = seed
            self.seed = None
        else:
            rng = np.random.default_rng(seed)
            self.seed = int(seed) if isinstance(seed, (int, np.integer)) else None
        self.specs = tuple(specs)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.layers = []
        shape = self.input_shape
        for i, spec in enumerate(self.specs):
            try:
                layer = _LAYER_CLASSES[spec.kind](spec, shape, rng, self.dtype)
            except ValueError as e:
                raise ValueError(f"layer {i} ({spec.kind}): {e}") from None
            self.layers.append(layer)
            shape = layer.out_shape
        self.output_shape = shape
        self._forward_done = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ValueError(
                f"input shape {x.shape[1:]} does not match network input {self.input_shape}"
            )
        for layer in self.layers:
            x = layer.forward(x)
        self._forward_done = True
        return x

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if not self._forward_done:
            raise RuntimeError("backward called before forward")
        gy = np.asarray(gy, dtype=self.dtype)
        if gy.shape[1:] != self.output_shape:
            raise ValueError(
                f"loss gradient shape {gy.shape[1:]} does not match output {self.output_shape}"
            )
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            if layer.has_params:
                out.extend(layer.params())
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            if layer.has_params:
                out.extend(layer.grads())
        return out

    def set_parameters(self, values: Sequence[np.ndarray]) -> None:
        current = self.parameters()
        if len(values) != len(current):
            raise ValueError(f"expected {len(current)} parameter arrays, got {len(values)}")
        for p, v in zip(current, values):
            v = np.asarray(v, dtype=self.dtype)
            if v.shape != p.shape:
                raise ValueError(f"parameter shape {v.shape} does not match {p.shape}")
            p[...] = v

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def astype(self, dtype) -> "Network":
        clone = Network(self.specs, self.input_shape, seed=self.seed or 0, dtype=dtype)
        clone.set_parameters([p.astype(dtype) for p in self.parameters()])
        return clone


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return (2.0 / pred.size) * (pred - target)


def _layer_name(net: Network, param_index: int) -> str:
    i = 0
    for li, layer in enumerate(net.layers):
        if layer.has_params:
            for _ in layer.params():
                if i == param_index:
                    return f"layer {li} ({net.specs[li].kind})"
                i += 1
    return f"parameter {param_index}"


def gradient_check(net: Network, x: np.ndarray, target: np.ndarray = None, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per parameter is |analytic - numeric| divided by
    max(|analytic|, |numeric|, 1e-12). Requires a float64 network and a
    batch of at most 4 samples. Meaningful at generic parameter points
    only: freshly zero-initialized biases can sit exactly on a relu kink
    (an all-zero receptive field propagates the bias unchanged), where the
    two-sided difference straddles the non-differentiable point.
    """
    if net.dtype != np.float64:
        raise RuntimeError("gradient_check requires a float64 network")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] > 4:
        raise ValueError("gradient_check expects a small batch (n <= 4)")
    if target is None:
        target = x
    target = np.asarray(target, dtype=np.float64)

    pred = net.forward(x)
    net.backward(mse_grad(pred, target))
    analytic = [g.copy() for g in net.gradients()]
    for pi, g in enumerate(analytic):
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"non-finite gradient in {_layer_name(net, pi)}")

    def loss() -> float:
        return mse_loss(net.forward(x), target)

    worst = 0.0
    for p, g in zip(net.parameters(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss()
            flat[i] = orig - eps
            lm = loss()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-12)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def sgd_step(net: Network, lr: float, momentum: float = 0.0, velocity=None):
    """In-place SGD update from the gradients of the last backward pass."""
    params = net.parameters()
    grads = net.gradients()
    if momentum == 0.0:
        for p, g in zip(params, grads):
            p -= np.asarray(lr * g, dtype=p.dtype)
        return velocity
    if velocity is None:
        velocity = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, velocity):
        v *= momentum
        v += g.astype(p.dtype)
        p -= np.asarray(lr * v, dtype=p.dtype)
    return velocity


@dataclass
class TrainedAutoencoder:
    encoder: Network
    decoder: Network
    loss_history: list[float] = field(default_factory=list)


def iterate_minibatches(n: int, batch_size: int, epochs: int, rng: np.random.Generator):
    """Yield (epoch, index array) pairs with a fresh shuffle per epoch."""
    for epoch in range(epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, batch_size):
            yield epoch, perm[lo:lo + batch_size]


def fit_autoencoder(
    encoder_specs: Sequence[LayerSpec],
    decoder_specs: Sequence[LayerSpec],
    data: np.ndarray,
    *,
    epochs: int,
    learning_rate: float,
    batch_size: int = 64,
    momentum: float = 0.0,
    seed: int = 0,
) -> TrainedAutoencoder:
    """Train encoder+decoder on pixel MSE with deterministic minibatch SGD.

    Returns the trained networks plus the per-epoch mean reconstruction
    loss. Training is bit-reproducible for a fixed seed and data order.
    """
    data = np.ascontiguousarray(data, dtype=np.float32)
    Batch(data)  # validate shape, range, finiteness
    n = data.shape[0]

    enc_seed, dec_seed, order_seed = _spawn_seeds(seed, 3)
    enc = Network(encoder_specs, (1, 32, 32), seed=enc_seed, dtype=np.float32)
    if len(enc.output_shape) != 1:
        raise ValueError("encoder must end in a vector latent layer")
    dec = Network(decoder_specs, enc.output_shape, seed=dec_seed, dtype=np.float32)
    if dec.output_shape != (1, 32, 32):
        raise ValueError(f"decoder must reconstruct (1, 32, 32), got {dec.output_shape}")

    order_rng = np.random.default_rng(order_seed)
    history = []
    vel_e = vel_d = None
    epoch_sum, epoch_n = 0.0, 0
    current_epoch = 0
    for epoch, idx in iterate_minibatches(n, batch_size, epochs, order_rng):
        if epoch != current_epoch:
            history.append(epoch_sum / epoch_n)
            epoch_sum, epoch_n = 0.0, 0
            current_epoch = epoch
        xb = data[idx][:, None, :, :]
        recon = dec.forward(enc.forward(xb))
        loss = mse_loss(recon, xb)
        if not np.isfinite(loss):
            raise RuntimeError(f"reconstruction loss diverged at epoch {epoch}")
        epoch_sum += loss * len(idx)
        epoch_n += len(idx)
        gz = dec.backward(mse_grad(recon, xb))
        enc.backward(gz)
        vel_d = sgd_step(dec, learning_rate, momentum, vel_d)
        vel_e = sgd_step(enc, learning_rate, momentum, vel_e)
    if epoch_n:
        history.append(epoch_sum / epoch_n)
    return TrainedAutoencoder(enc, dec, history)


def _spawn_seeds(seed: int, k: int) -> list:
    return list(np.random.SeedSequence(seed).spawn(k))
