"""Dilated causal convolution + channel self-attention predictor.

The network maps an ``(R, m)`` window of scaled signals to a prediction of the
next message's ``m`` signals. It is a stack of residual blocks, each holding
weight-normalized dilated causal convolutions followed by ReLU. Every block
after the first is preceded by a parameter-free attention step that reweights
feature maps (channels) by their mutual similarity. A linear layer reads the
last time step of the final block.

Everything is plain numpy in float64 with hand-written backward passes, so
tensors follow the ``(batch, channels, time)`` layout throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import NumericError, ShapeError
from .ingest import SignalWindow, layers_for_receptive_field, subsequence_length

DEFAULT_BLOCKS = 3


# ---------------------------------------------------------------------------
# primitive layers


@dataclass
class ConvLayerParams:
    """Weight-normalized 1-D convolution: w = gain * direction / ||direction||."""

    direction: np.ndarray  # (out, in, k)
    gain: np.ndarray  # (out,)
    bias: np.ndarray  # (out,)
    dilation: int = 1

    @property
    def kernel_size(self) -> int:
        return self.direction.shape[2]


def effective_weights(p: ConvLayerParams) -> np.ndarray:
    norms = np.sqrt(np.sum(p.direction**2, axis=(1, 2)))
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0).tolist()
        raise NumericError(f"zero-norm direction for output channels {bad}")
    return (p.gain / norms)[:, None, None] * p.direction


def _weight_norm_backward(direction, gain, dw):
    """Gradients of w = g v / ||v|| with respect to (v, g), given dL/dw."""
    norms = np.sqrt(np.sum(direction**2, axis=(1, 2)))
    dgain = np.sum(dw * direction, axis=(1, 2)) / norms
    ddirection = (gain / norms)[:, None, None] * dw - (gain * dgain / norms**2)[:, None, None] * direction
    return ddirection, dgain


def causal_conv(x: np.ndarray, w: np.ndarray, bias: np.ndarray, dilation: int) -> np.ndarray:
    """y[b,o,t] = bias[o] + sum_{c,tau} w[o,c,tau] x[b,c,t - dilation*(k-1-tau)].

    Taps that would read before t=0 contribute nothing; nothing is padded.
    """
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv expects {w.shape[1]} input channels, got {x.shape[1]}")
    B, _, T = x.shape
    k = w.shape[2]
    y = np.empty((B, w.shape[0], T))
    y[...] = bias[None, :, None]
    for tau in range(k):
        shift = dilation * (k - 1 - tau)
        if shift >= T:
            continue
        y[:, :, shift:] += np.einsum("oc,bct->bot", w[:, :, tau], x[:, :, : T - shift])
    return y


def causal_conv_backward(x, w, dilation, dy):
    """Returns (dx, dw, dbias) for causal_conv."""
    T = x.shape[2]
    k = w.shape[2]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for tau in range(k):
        shift = dilation * (k - 1 - tau)
        if shift >= T:
            continue
        dw[:, :, tau] = np.einsum("bot,bct->oc", dy[:, :, shift:], x[:, :, : T - shift])
        dx[:, :, : T - shift] += np.einsum("oc,bot->bct", w[:, :, tau], dy[:, :, shift:])
    return dx, dw, dy.sum(axis=(0, 2))


def dilated_causal_conv1d(x: np.ndarray, p: ConvLayerParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError("conv input must be (batch, channels, time)")
    return causal_conv(x, effective_weights(p), p.bias, p.dilation)


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention_weights(x: np.ndarray) -> np.ndarray:
    """Row-stochastic (channels x channels) similarity of feature maps."""
    x = np.asarray(x, dtype=np.float64)
    d_k = x.shape[-1]
    if d_k < 1:
        raise ShapeError("attention needs at least one time step")
    return _softmax_rows(x @ np.swapaxes(x, -1, -2) / math.sqrt(d_k))


def attention(x: np.ndarray) -> np.ndarray:
    """softmax(Q K^T / sqrt(d_k)) V with Q = K = V = x.

    ``x`` is ``(channels, time)`` or batched ``(batch, channels, time)``; d_k
    is the time extent, i.e. the length of each key vector.
    """
    x = np.asarray(x, dtype=np.float64)
    return attention_weights(x) @ x


def _attention_backward(x, weights, dout):
    d_k = x.shape[-1]
    dx = np.swapaxes(weights, -1, -2) @ dout
    dweights = dout @ np.swapaxes(x, -1, -2)
    dscores = weights * (dweights - np.sum(dweights * weights, axis=-1, keepdims=True))
    dx += (dscores + np.swapaxes(dscores, -1, -2)) @ x / math.sqrt(d_k)
    return dx


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class TcnaConfig:
    """Architecture of one per-ID network.

    ``block_layers`` lists the number of dilated conv layers in each residual
    block; the default ``(2, 2, 2)`` is three blocks of two. Global conv layer
    ``j`` uses dilation ``2**j``.
    """

    m: int
    kernel_size: int = 2
    block_layers: tuple[int, ...] = (2, 2, 2)
    channel_multiplier: int = 3

    def __post_init__(self):
        object.__setattr__(self, "block_layers", tuple(int(n) for n in self.block_layers))
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.kernel_size < 2:
            raise ValueError("kernel size must be at least 2")
        if any(n < 1 for n in self.block_layers):
            raise ValueError("every block needs at least one conv layer")
        if self.channel_multiplier < 1:
            raise ValueError("channel multiplier must be positive")

    @classmethod
    def for_receptive_field(cls, m: int, R: int, kernel_size: int = 2, blocks: int = DEFAULT_BLOCKS, **kw):
        """Spread the l conv layers implied by R over ``blocks`` residual blocks.

        Earlier blocks get the extra layer when l is not a multiple of the
        block count, e.g. l=4 over 3 blocks gives (2, 1, 1).
        """
        l = layers_for_receptive_field(R, kernel_size)
        blocks = min(blocks, l)
        base, extra = divmod(l, blocks)
        layout = tuple(base + (1 if i < extra else 0) for i in range(blocks))
        return cls(m=m, kernel_size=kernel_size, block_layers=layout, **kw)

    @property
    def blocks(self) -> int:
        return len(self.block_layers)

    @property
    def n_layers(self) -> int:
        return sum(self.block_layers)

    @property
    def hidden(self) -> int:
        return self.channel_multiplier * self.m

    @property
    def dilations(self) -> list[int]:
        return [2**j for j in range(self.n_layers)]

    @property
    def receptive_field(self) -> int:
        return subsequence_length(self.kernel_size, self.n_layers)

    R = receptive_field

    def to_json(self) -> dict:
        d = asdict(self)
        d["block_layers"] = list(self.block_layers)
        return d

    @classmethod
    def from_json(cls, doc: Mapping) -> "TcnaConfig":
        return cls(
            m=int(doc["m"]),
            kernel_size=int(doc.get("kernel_size", 2)),
            block_layers=tuple(doc.get("block_layers", (2, 2, 2))),
            channel_multiplier=int(doc.get("channel_multiplier", 3)),
        )


@dataclass
class ForwardCache:
    """Intermediate activations kept for the backward pass."""

    block_inputs: list = field(default_factory=list)  # input to each residual block (post-attention)
    attn_inputs: list = field(default_factory=list)  # (x, weights) per attention step
    conv_inputs: list = field(default_factory=list)  # per conv layer
    conv_outputs: list = field(default_factory=list)  # post-ReLU per conv layer
    weights: dict = field(default_factory=dict)  # effective conv weights per layer name
    last: np.ndarray | None = None


class TcnaModel:
    """Parameters plus forward/backward passes of one network.

    Parameters live in ``self.params``, an ordered name -> float64 array map.
    Conv layers are named ``block{b}.conv{i}.{direction,gain,bias}``; the
    first block also has ``block0.downsample.{weight,bias}`` and the output
    layer is ``linear.{weight,bias}``.
    """

    def __init__(self, config: TcnaConfig, params: Mapping[str, np.ndarray]):
        self.config = config
        self.params = {name: np.asarray(v, dtype=np.float64) for name, v in params.items()}
        expected = _param_shapes(config)
        if list(expected) != list(self.params):
            raise ShapeError(f"parameter names do not match config: {sorted(set(expected) ^ set(self.params))}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {self.params[name].shape}")

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, config: TcnaConfig, seed: int = 0) -> "TcnaModel":
        """Uniform(+-1/sqrt(fan_in)) directions and weights, gain = ||direction||, zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in _param_shapes(config).items():
            if name.endswith(".gain"):
                direction = params[name[: -len("gain")] + "direction"]
                params[name] = np.sqrt(np.sum(direction**2, axis=(1, 2)))
            elif name.endswith(".bias"):
                params[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                bound = 1.0 / math.sqrt(fan_in)
                params[name] = rng.uniform(-bound, bound, size=shape)
        return cls(config, params)

    @classmethod
    def zeros(cls, config: TcnaConfig) -> "TcnaModel":
        """All-zero weights and biases; gains and directions are set so w = 0."""
        params = {}
        for name, shape in _param_shapes(config).items():
            params[name] = np.ones(shape) if name.endswith(".direction") else np.zeros(shape)
        return cls(config, params)

    def copy(self) -> "TcnaModel":
        return TcnaModel(self.config, {k: v.copy() for k, v in self.params.items()})

    # -- layer views --------------------------------------------------------

    def conv_layer(self, block: int, index: int) -> ConvLayerParams:
        prefix = f"block{block}.conv{index}"
        return ConvLayerParams(
            self.params[prefix + ".direction"],
            self.params[prefix + ".gain"],
            self.params[prefix + ".bias"],
            dilation=self._dilation(block, index),
        )

    def _dilation(self, block: int, index: int) -> int:
        return 2 ** (sum(self.config.block_layers[:block]) + index)

    def parameter_count(self) -> int:
        return parameter_count(self)

    # -- forward ------------------------------------------------------------

    def _prepare(self, windows) -> np.ndarray:
        x = _stack_windows(windows)
        if x.ndim == 2:
            x = x[None]
        R = self.config.receptive_field
        if x.ndim != 3 or x.shape[1] != R or x.shape[2] != self.config.m:
            raise ShapeError(f"expected windows of shape (batch, {R}, {self.config.m}), got {x.shape}")
        return np.ascontiguousarray(x.transpose(0, 2, 1))

    def forward(self, windows, cache: ForwardCache | None = None) -> np.ndarray:
        """Predict the next signal vector for each window; returns (batch, m)."""
        h = self._prepare(windows)
        p = self.params
        for b, n_conv in enumerate(self.config.block_layers):
            if b > 0:
                weights = attention_weights(h)
                if cache is not None:
                    cache.attn_inputs.append((h, weights))
                h = weights @ h
            if cache is not None:
                cache.block_inputs.append(h)
            block_in = h
            for i in range(n_conv):
                name = f"block{b}.conv{i}"
                layer = self.conv_layer(b, i)
                w = effective_weights(layer)
                out = np.maximum(causal_conv(h, w, layer.bias, layer.dilation), 0.0)
                if cache is not None:
                    cache.weights[name] = w
                    cache.conv_inputs.append(h)
                    cache.conv_outputs.append(out)
                h = out
            if b == 0:
                shortcut = np.einsum("oc,bct->bot", p["block0.downsample.weight"][:, :, 0], block_in)
                shortcut += p["block0.downsample.bias"][None, :, None]
            else:
                shortcut = block_in
            h = h + shortcut
        last = h[:, :, -1]
        if cache is not None:
            cache.last = last
        return last @ p["linear.weight"].T + p["linear.bias"]

    __call__ = forward

    def predict(self, windows) -> np.ndarray:
        return self.forward(windows)

    # -- backward -----------------------------------------------------------

    def backward(self, cache: ForwardCache, dpred: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given dL/dprediction of shape (batch, m)."""
        p = self.params
        grads = {name: np.zeros_like(v) for name, v in p.items()}
        grads["linear.weight"] = dpred.T @ cache.last
        grads["linear.bias"] = dpred.sum(axis=0)

        final = cache.conv_outputs[-1]
        dh = np.zeros((dpred.shape[0], final.shape[1], final.shape[2]))
        dh[:, :, -1] = dpred @ p["linear.weight"]

        layer_idx = len(cache.conv_inputs)
        for b in reversed(range(self.config.blocks)):
            n_conv = self.config.block_layers[b]
            block_in = cache.block_inputs[b]
            # residual sum: the gradient flows to both branches unchanged
            if b == 0:
                wd = p["block0.downsample.weight"][:, :, 0]
                grads["block0.downsample.weight"][:, :, 0] = np.einsum("bot,bct->oc", dh, block_in)
                grads["block0.downsample.bias"] = dh.sum(axis=(0, 2))
                dshortcut = np.einsum("oc,bot->bct", wd, dh)
            else:
                dshortcut = dh
            for i in reversed(range(n_conv)):
                layer_idx -= 1
                name = f"block{b}.conv{i}"
                out = cache.conv_outputs[layer_idx]
                x_in = cache.conv_inputs[layer_idx]
                dpre = dh * (out > 0)
                dx, dw, dbias = causal_conv_backward(x_in, cache.weights[name], self._dilation(b, i), dpre)
                ddir, dgain = _weight_norm_backward(p[name + ".direction"], p[name + ".gain"], dw)
                grads[name + ".direction"] = ddir
                grads[name + ".gain"] = dgain
                grads[name + ".bias"] = dbias
                dh = dx
                if not np.all(np.isfinite(dh)):
                    raise NumericError(f"non-finite gradient at {name}")
            dh = dh + dshortcut
            if b > 0:
                x_att, weights = cache.attn_inputs[b - 1]
                dh = _attention_backward(x_att, weights, dh)
                if not np.all(np.isfinite(dh)):
                    raise NumericError(f"non-finite gradient at attention before block{b}")
        return grads

    # -- persistence --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "layers": [
                {"name": name, "shape": list(v.shape), "values": v.ravel().tolist()}
                for name, v in self.params.items()
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "TcnaModel":
        config = TcnaConfig.from_json(doc["config"])
        params = {}
        for layer in doc["layers"]:
            values = np.asarray(layer["values"], dtype=np.float64)
            params[layer["name"]] = values.reshape(tuple(layer["shape"]))
        return cls(config, params)

    def save(self, path) -> None:
        # json emits shortest round-trip reprs, so reloads are bit-identical
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "TcnaModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _stack_windows(windows) -> np.ndarray:
    if isinstance(windows, SignalWindow):
        return np.asarray(windows.values, dtype=np.float64)
    if isinstance(windows, (list, tuple)) and windows and isinstance(windows[0], SignalWindow):
        return np.stack([w.values for w in windows]).astype(np.float64)
    return np.asarray(windows, dtype=np.float64)


def _param_shapes(config: TcnaConfig) -> dict[str, tuple[int, ...]]:
    m, hid, k = config.m, config.hidden, config.kernel_size
    shapes: dict[str, tuple[int, ...]] = {}
    for b, n_conv in enumerate(config.block_layers):
        for i in range(n_conv):
            c_in = m if (b == 0 and i == 0) else hid
            prefix = f"block{b}.conv{i}"
            shapes[prefix + ".direction"] = (hid, c_in, k)
            shapes[prefix + ".gain"] = (hid,)
            shapes[prefix + ".bias"] = (hid,)
        if b == 0:
            shapes["block0.downsample.weight"] = (hid, m, 1)
            shapes["block0.downsample.bias"] = (hid,)
    if config.blocks:
        shapes["linear.weight"] = (m, hid)
        shapes["linear.bias"] = (m,)
    return shapes


def parameter_count(model: TcnaModel | TcnaConfig) -> int:
    """Number of stored trainable scalars."""
    config = model.config if isinstance(model, TcnaModel) else model
    return sum(int(np.prod(shape)) for shape in _param_shapes(config).values())


def tcna_forward(model: TcnaModel, windows) -> np.ndarray:
    return model.forward(windows)
