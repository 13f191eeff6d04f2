"""Backbone, projection head, and temperature: one set of weights serves both
the cluster predictor p(y|x) = softmax(logits/tau) and the unnormalized
density through E(x) = -logsumexp(logits/tau).
"""

import json

import numpy as np

from .autodiff import Tensor, logsumexp, matmul, scale, softmax

CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("relu", "leaky_relu")
LEAKY_SLOPE = 0.2


class Affine:
    """One dense layer, W (fan_in, fan_out) and bias b (fan_out,)."""

    def __init__(self, weight, bias):
        self.weight = Tensor(weight)
        self.bias = Tensor(bias)

    def __call__(self, x):
        return matmul(x, self.weight) + self.bias

    def tensors(self):
        return [self.weight, self.bias]


class Mlp:
    """Dense layers with the given activation on all but the last layer."""

    def __init__(self, dims, activation, rng):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; expected one of {_ACTIVATIONS}")
        self.dims = [int(d) for d in dims]
        self.activation = activation
        self.layers = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            bound = np.sqrt(1.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.layers.append(Affine(w, np.zeros(fan_out)))

    def __call__(self, x):
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = h.relu() if self.activation == "relu" else h.leaky_relu(LEAKY_SLOPE)
        return h

    def tensors(self):
        out = []
        for layer in self.layers:
            out.extend(layer.tensors())
        return out


class ModelParams:
    """Encoder + head + fixed temperature; the full trainable state Theta."""

    def __init__(self, encoder, head, temperature):
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.encoder = encoder
        self.head = head
        self.temperature = float(temperature)

    @property
    def n_clusters(self):
        return self.head.dims[-1]

    @property
    def input_dim(self):
        return self.encoder.dims[0]

    def parameters(self):
        return self.encoder.tensors() + self.head.tensors()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def descriptor(self):
        return {
            "version": CHECKPOINT_VERSION,
            "encoder_dims": list(self.encoder.dims),
            "head_dims": list(self.head.dims),
            "activation": self.encoder.activation,
            "head_activation": self.head.activation,
            "temperature": self.temperature,
        }


def init_model(input_dim, encoder_hidden, embed_dim, head_hidden, n_clusters,
               temperature=1.0, activation="relu", rng=None, head_activation=None):
    """Fresh model with W ~ Uniform(+-sqrt(1/fan_in)) and zero biases."""
    if n_clusters < 2:
        raise ValueError(f"n_clusters must be >= 2, got {n_clusters}")
    if rng is None:
        rng = np.random.default_rng(0)
    enc_dims = [input_dim, *encoder_hidden, embed_dim]
    head_dims = [embed_dim, *head_hidden, n_clusters]
    encoder = Mlp(enc_dims, activation, rng)
    head = Mlp(head_dims, head_activation or activation, rng)
    return ModelParams(encoder, head, temperature)


def _as_input(params, x):
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim != 2 or t.shape[1] != params.input_dim:
        raise ValueError(
            f"expected input of shape (n, {params.input_dim}), got {t.shape}")
    return t


def encode(params, x):
    """Embedding enc(x), shape (n, h)."""
    return params.encoder(_as_input(params, x))


def logits(params, x):
    """Head outputs f(enc(x)), shape (n, c), before temperature scaling."""
    return params.head(encode(params, x))


def scaled_logits(params, x):
    return scale(logits(params, x), 1.0 / params.temperature)


def predict(params, x):
    """Cluster responsibilities p(y|x) = softmax(f(enc(x))/tau), shape (n, c)."""
    return softmax(scaled_logits(params, x), axis=1)


def energy(params, x):
    """E(x) = -logsumexp(f(enc(x))/tau), shape (n,)."""
    return scale(logsumexp(scaled_logits(params, x), axis=1), -1.0)


def save_params(params, path):
    """Write weights plus an architecture descriptor to an .npz (bit-exact)."""
    arrays = {}
    for i, t in enumerate(params.parameters()):
        arrays[f"p{i}"] = t.data
    arrays["descriptor"] = np.frombuffer(
        json.dumps(params.descriptor()).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_params(path):
    with np.load(path) as z:
        desc = json.loads(bytes(z["descriptor"]).decode("utf-8"))
        if desc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {desc.get('version')!r}; "
                f"this build reads version {CHECKPOINT_VERSION}")
        rng = np.random.default_rng(0)
        encoder = Mlp(desc["encoder_dims"], desc["activation"], rng)
        head = Mlp(desc["head_dims"], desc["head_activation"], rng)
        params = ModelParams(encoder, head, desc["temperature"])
        for i, t in enumerate(params.parameters()):
            loaded = z[f"p{i}"]
            if loaded.shape != t.data.shape:
                raise ValueError(f"checkpoint array p{i} has shape {loaded.shape}, expected {t.data.shape}")
            t.data = loaded
    return params
