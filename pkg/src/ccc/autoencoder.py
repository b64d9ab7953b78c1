"""Fully connected autoencoder with hand-written backprop and Adam.

Encoder 14 -> 10 -> 6 -> 3 (tanh hidden, linear latent), decoder mirrored
3 -> 6 -> 10 -> 14 (tanh hidden, linear output). Latent channel order is
roof, wall, height. Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError

ENCODER_WIDTHS = (14, 10, 6, 3)
LATENT_NAMES = ("roof", "wall", "height")
CHECKPOINT_FORMAT = "ccc-autoencoder"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str  # "tanh" | "linear"

    def __post_init__(self):
        if self.activation not in ("tanh", "linear"):
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.bias.shape != (self.weight.shape[1],):
            raise ValidationError("bias length must equal layer fan-out")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class Network:
    encoder: list[Layer]
    decoder: list[Layer]
    seed: int = 0
    latent_names: tuple[str, ...] = LATENT_NAMES

    @classmethod
    def initialize(cls, seed: int = 0, widths: tuple[int, ...] = ENCODER_WIDTHS) -> "Network":
        rng = np.random.default_rng(seed)

        def stack(ws):
            layers = []
            for i, (a, b) in enumerate(zip(ws[:-1], ws[1:])):
                act = "linear" if i == len(ws) - 2 else "tanh"
                layers.append(Layer(_glorot(rng, a, b), np.zeros(b), act))
            return layers

        return cls(stack(widths), stack(widths[::-1]), seed)

    @property
    def layers(self) -> list[Layer]:
        return self.encoder + self.decoder

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "Network":
        dup = lambda ls: [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in ls]
        return Network(dup(self.encoder), dup(self.decoder), self.seed, self.latent_names)

    def validate(self) -> None:
        if self.encoder[0].weight.shape[0] != 14 or self.encoder[-1].weight.shape[1] != len(self.latent_names):
            raise ValidationError("encoder must map 14 features to the latent channels")
        if self.decoder[0].weight.shape[0] != len(self.latent_names) or self.decoder[-1].weight.shape[1] != 14:
            raise ValidationError("decoder must map the latent channels back to 14 features")
        if not all(np.all(np.isfinite(p)) for p in self.parameters()):
            raise NumericalError("non-finite network parameters")


def _forward(layers: list[Layer], x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    acts = [x]
    # overflow surfaces as the NumericalError below
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in layers:
            z = acts[-1] @ layer.weight + layer.bias
            acts.append(np.tanh(z) if layer.activation == "tanh" else z)
    out = acts[-1]
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite activations in forward pass")
    return out, acts


def _backward(layers: list[Layer], acts: list[np.ndarray], grad_out: np.ndarray):
    grads = []
    g = grad_out
    for layer, a_in, a_out in zip(reversed(layers), reversed(acts[:-1]), reversed(acts[1:])):
        if layer.activation == "tanh":
            g = g * (1.0 - a_out**2)
        grads.append((a_in.T @ g, g.sum(axis=0)))
        g = g @ layer.weight.T
    grads.reverse()
    return grads, g


def encode(net: Network, x: np.ndarray) -> np.ndarray:
    return _forward(net.encoder, _as_features(x))[0]


def decode(net: Network, z: np.ndarray) -> np.ndarray:
    return _forward(net.decoder, np.asarray(z, dtype=np.float64))[0]


def _as_features(x) -> np.ndarray:
    values = getattr(x, "values", x)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != 14:
        raise ValidationError(f"expected an (n, 14) feature array, got {values.shape}")
    return values


@dataclass
class ForwardCache:
    x: np.ndarray
    latent: np.ndarray
    reconstruction: np.ndarray
    enc_acts: list[np.ndarray]
    dec_acts: list[np.ndarray]


def forward(net: Network, x) -> ForwardCache:
    x = _as_features(x)
    z, enc_acts = _forward(net.encoder, x)
    xh, dec_acts = _forward(net.decoder, z)
    return ForwardCache(x, z, xh, enc_acts, dec_acts)


def reconstruction_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Per-pixel squared error summed over features, averaged over pixels."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValidationError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    if x.shape[0] == 0:
        return 0.0
    return float(np.sum((x - x_hat) ** 2) / x.shape[0])


def reconstruction_grad(x: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    """d(reconstruction_loss)/d(x_hat)."""
    if x.shape[0] == 0:
        return np.zeros_like(x_hat)
    return -2.0 * (x - x_hat) / x.shape[0]


def backward(net: Network, cache: ForwardCache, grad_reconstruction: np.ndarray,
             grad_latent: np.ndarray | None = None) -> list[np.ndarray]:
    """Parameter gradients, in :meth:`Network.parameters` order.

    ``grad_reconstruction`` is dL/d(x_hat); ``grad_latent`` adds any loss
    term that reads the latent directly.
    """
    dec_grads, g_latent = _backward(net.decoder, cache.dec_acts, grad_reconstruction)
    if grad_latent is not None:
        g_latent = g_latent + grad_latent
    enc_grads, _ = _backward(net.encoder, cache.enc_acts, g_latent)
    flat = []
    for gw, gb in enc_grads + dec_grads:
        flat += [gw, gb]
    return flat


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.80
    beta2: float = 0.95
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, **kw) -> "AdamState":
        params = net.parameters()
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(net: Network, grads: list[np.ndarray], state: AdamState) -> None:
    """In-place bias-corrected Adam update of ``net`` and ``state``."""
    params = net.parameters()
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ValidationError("gradient / optimizer state does not match the network")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValidationError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --- checkpoints -------------------------------------------------------------


def _layers_doc(layers: list[Layer]) -> list[dict]:
    return [
        {
            "shape": list(l.weight.shape),
            "activation": l.activation,
            "weight": [float(v) for v in l.weight.ravel()],
            "bias": [float(v) for v in l.bias],
        }
        for l in layers
    ]


def _layers_from(doc: list[dict]) -> list[Layer]:
    return [
        Layer(np.array(d["weight"], dtype=np.float64).reshape(d["shape"]),
              np.array(d["bias"], dtype=np.float64), d["activation"])
        for d in doc
    ]


def checkpoint_dict(net: Network, state: AdamState | None = None, epoch: int = 0) -> dict:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": net.seed,
        "epoch": epoch,
        "latent_names": list(net.latent_names),
        "encoder": _layers_doc(net.encoder),
        "decoder": _layers_doc(net.decoder),
    }
    if state is not None:
        doc["optimizer"] = {
            "learning_rate": state.learning_rate,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
            "step": state.step,
            "m": [[float(v) for v in a.ravel()] for a in state.m],
            "v": [[float(v) for v in a.ravel()] for a in state.v],
        }
    return doc


def save_checkpoint(path: str | Path, net: Network, state: AdamState | None = None, epoch: int = 0) -> None:
    # json writes floats with repr, so values round-trip bit-exactly
    text = json.dumps(checkpoint_dict(net, state, epoch), indent=1, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[Network, AdamState | None, int]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    net = Network(_layers_from(doc["encoder"]), _layers_from(doc["decoder"]), int(doc["seed"]),
                  tuple(doc["latent_names"]))
    net.validate()
    state = None
    if "optimizer" in doc:
        o = doc["optimizer"]
        shapes = [p.shape for p in net.parameters()]
        state = AdamState(o["learning_rate"], o["beta1"], o["beta2"], o["eps"], int(o["step"]),
                          [np.array(a, dtype=np.float64).reshape(s) for a, s in zip(o["m"], shapes)],
                          [np.array(a, dtype=np.float64).reshape(s) for a, s in zip(o["v"], shapes)])
    return net, state, int(doc["epoch"])
