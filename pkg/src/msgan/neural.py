"""A small fully-connected network stack written directly on numpy.

Weights are stored as ``(fan_in, fan_out)`` matrices and inputs as row
batches, so a layer computes ``x @ W + b``. Hidden layers use ReLU; the
output activation is one of ``linear``, ``tanh`` or ``sigmoid``.
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, InvalidArgument

ACTIVATIONS = ("linear", "tanh", "sigmoid")
MAGIC = b"MSMLP1"


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus(x):
    return np.logaddexp(0.0, x)


class Mlp:
    def __init__(self, layer_sizes, output_activation="linear", weights=None, biases=None, rng=None,
                 output_gain=1.0):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise InvalidArgument("an Mlp needs at least input and output sizes, all positive")
        if output_activation not in ACTIVATIONS:
            raise InvalidArgument(f"unknown output activation {output_activation!r}")
        self.layer_sizes = layer_sizes
        self.output_activation = output_activation
        if weights is None:
            rng = rng if rng is not None else np.random.default_rng()
            weights, biases = [], []
            n_layers = len(layer_sizes) - 1
            for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
                # He-uniform; the output layer may be shrunk to keep squashing outputs unsaturated
                limit = np.sqrt(6.0 / fan_in) * (output_gain if i == n_layers - 1 else 1.0)
                weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                biases.append(np.zeros(fan_out))
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self._check_shapes()

    def _check_shapes(self):
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise InvalidArgument("parameter count does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise InvalidArgument(f"layer {i} parameters have shapes {w.shape}, {b.shape}; expected {expected}")

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    @property
    def params(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self):
        return Mlp(self.layer_sizes, self.output_activation,
                   [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        return (self.layer_sizes == other.layer_sizes
                and self.output_activation == other.output_activation
                and all(np.array_equal(a, b) for a, b in zip(self.params, other.params)))

    def __repr__(self):
        return f"Mlp({self.layer_sizes}, output_activation={self.output_activation!r})"

    def _activate(self, z):
        if self.output_activation == "tanh":
            return np.tanh(z)
        if self.output_activation == "sigmoid":
            return sigmoid(z)
        return z

    def forward(self, x, return_cache=False):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x.reshape(1, -1) if single else x
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise InvalidArgument(f"input has shape {x.shape}, expected (..., {self.n_in})")
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.maximum(z, 0.0) if i < last else z
            acts.append(h)
        logits = acts[-1]
        out = self._activate(logits)
        if single:
            out = out[0]
        if return_cache:
            return out, (acts, out if not single else out[None])
        return out

    def backward(self, x, upstream, cache=None, wrt_logits=False):
        """Reverse-mode gradients, summed over the batch.

        ``upstream`` is dL/d(output), or dL/d(pre-activation output) when
        ``wrt_logits`` is set (useful for losses written on logits).
        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered
        like ``params``.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if cache is None:
            _, cache = self.forward(x, return_cache=True)
        acts, out = cache
        delta = np.asarray(upstream, dtype=float)
        delta = delta.reshape(1, -1) if delta.ndim == 1 else delta
        if delta.shape != out.shape:
            raise InvalidArgument(f"upstream has shape {delta.shape}, expected {out.shape}")
        if not wrt_logits:
            if self.output_activation == "tanh":
                delta = delta * (1.0 - out * out)
            elif self.output_activation == "sigmoid":
                delta = delta * out * (1.0 - out)
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = acts[i]
            grads.append(delta.sum(axis=0))
            grads.append(h_in.T @ delta)
            delta = delta @ self.weights[i].T
            if i > 0:
                # ReLU subgradient at zero is zero
                delta = delta * (acts[i] > 0)
        grads.reverse()
        input_grad = delta[0] if single else delta
        return grads, input_grad


@dataclass(frozen=True)
class SgdOptions:
    learning_rate: float = 1e-3
    momentum: float = 0.9

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidArgument("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise InvalidArgument("momentum must lie in [0, 1)")


class Sgd:
    """SGD with classical momentum; keeps one velocity buffer per parameter."""

    def __init__(self, net, opts=None):
        self.opts = opts or SgdOptions()
        self.velocity = [np.zeros_like(p) for p in net.params]

    def step(self, net, param_grads):
        lr, mu = self.opts.learning_rate, self.opts.momentum
        for p, g, v in zip(net.params, param_grads, self.velocity):
            v *= mu
            v += g
            p -= lr * v
        return net


def sgd_step(net, param_grads, opts=None, state=None):
    """One update. Pass the same ``state`` (an ``Sgd``) across calls for momentum."""
    state = state or Sgd(net, opts)
    return state.step(net, param_grads)


def save(net, fp=None):
    """Serialize to the MSMLP1 format; returns bytes when ``fp`` is None."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(net.layer_sizes)))
    buf.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
    act = net.output_activation.encode("ascii")
    buf.write(struct.pack("<I", len(act)))
    buf.write(act)
    for w, b in zip(net.weights, net.biases):
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    data = buf.getvalue()
    if fp is None:
        return data
    fp.write(data)
    return None


def load(data):
    if hasattr(data, "read"):
        data = data.read()
    view = memoryview(data)
    if bytes(view[:len(MAGIC)]) != MAGIC:
        raise FormatError("not an MSMLP1 stream (bad magic)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated MSMLP1 stream")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    (n_layers,) = struct.unpack("<I", take(4))
    if not 2 <= n_layers <= 64:
        raise FormatError(f"implausible layer count {n_layers}")
    sizes = list(struct.unpack(f"<{n_layers}I", take(4 * n_layers)))
    (act_len,) = struct.unpack("<I", take(4))
    act = bytes(take(act_len)).decode("ascii", errors="replace")
    if act not in ACTIVATIONS:
        raise FormatError(f"unknown activation {act!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(np.frombuffer(take(8 * fan_in * fan_out), dtype="<f8").reshape(fan_in, fan_out).astype(float))
        biases.append(np.frombuffer(take(8 * fan_out), dtype="<f8").astype(float))
    if pos != len(view):
        raise FormatError("trailing bytes after parameters: shape mismatch")
    return Mlp(sizes, act, weights, biases)
