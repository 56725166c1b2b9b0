"""One-class training of piecewise-affine networks.

Two losses are supported: the Deep SVDD objective (mean squared distance to a
fixed center plus weight decay) and a quantile loss that shrinks the radii just
inside a target quantile while pushing out the ones just beyond it. Gradients
are computed by hand-written backpropagation and applied with plain full-batch
gradient descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateData, FormatError, IndexOutOfRange
from .numlin import spawn_rngs
from .pwa_network import (Layer, PwaActivation, PwaNetwork, forward, network_lines,
                          output_norm, parse_network)


@dataclass
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-3
    weight_decay: float | None = None
    loss: str = "quantile"
    eps: float = 0.1
    k: int = 5
    a: Sequence[float] | None = None
    b: Sequence[float] | None = None
    restarts: int = 3
    seed: int = 0
    radius_quantile: float = 0.9
    normalize: bool = True

    def __post_init__(self):
        if self.loss not in ("svdd", "quantile"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.a is None:
            self.a = [5.0 * i for i in range(1, self.k + 1)]
        if self.b is None:
            self.b = [float(i) for i in range(1, self.k + 1)]
        if len(self.a) != self.k or len(self.b) != self.k:
            raise ValueError("need k coefficients in a and b")
        if self.restarts < 1 or self.epochs < 0:
            raise ValueError("restarts >= 1 and epochs >= 0 required")

    @property
    def decay(self) -> float:
        # the quantile loss carries no regulariser unless one is set explicitly
        if self.weight_decay is not None:
            return self.weight_decay
        return 1e-6 if self.loss == "svdd" else 0.0


@dataclass
class TrainedModel:
    network: PwaNetwork
    center: np.ndarray
    radius: float
    norm: int = 2
    final_loss: float = float("nan")
    restart_losses: list[float] = field(default_factory=list)

    def radii(self, data) -> np.ndarray:
        out, _ = forward(self.network, data)
        return output_norm(out - self.center, self.norm)

    def contains(self, c) -> np.ndarray:
        return self.radii(c) <= self.radius + 1e-12

    def dumps(self) -> str:
        lines = list(network_lines(self.network))
        lines.append("center " + " ".join(repr(float(v)) for v in self.center))
        lines.append(f"radius {float(self.radius)!r}")
        lines.append(f"norm {self.norm}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TrainedModel":
        lines = iter(text.splitlines())
        net = parse_network(lines)
        rest = {}
        for line in lines:
            if line.strip():
                key, _, val = line.strip().partition(" ")
                rest[key] = val
        try:
            center = np.array([float(v) for v in rest["center"].split()])
            radius = float(rest["radius"])
            norm = int(rest["norm"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad model trailer: {exc}") from None
        if center.shape != (net.output_dim,):
            raise FormatError("center dimension does not match network output")
        if norm not in (1, 2):
            raise FormatError(f"norm must be 1 or 2, got {norm}")
        return cls(net, center, radius, norm)


def default_architecture(n: int) -> tuple[list[int], list[PwaActivation]]:
    """Widths 50, 50, 50 with ReLU after the first two layers."""
    relu, ident = PwaActivation.relu(), PwaActivation.identity()
    return [50, 50, 50], [relu, relu, ident]


def init_network(n: int, widths, activations, rng: np.random.Generator) -> PwaNetwork:
    weights = []
    d_in = n
    for d_out in widths:
        s = 1.0 / math.sqrt(d_in)
        weights.append(rng.uniform(-s, s, size=(d_out, d_in)))
        d_in = d_out
    return PwaNetwork.from_weights(weights, list(activations))


def init_center(net: PwaNetwork, data) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] < 1:
        raise DegenerateData("need at least one scenario")
    out, _ = forward(net, data)
    return out.mean(axis=0)


def _frobenius(net: PwaNetwork) -> float:
    return float(sum((layer.weight ** 2).sum() for layer in net.layers))


def svdd_loss(net: PwaNetwork, data, center, decay: float = 0.0) -> float:
    out, _ = forward(net, np.atleast_2d(data))
    diff = out - center
    return float((diff * diff).sum(axis=1).mean() + 0.5 * decay * _frobenius(net))


def quantile_split(m: int, eps: float) -> int:
    return math.floor((1.0 - eps) * m + 1e-9)


def _quantile_weights(radii: np.ndarray, eps: float, k: int, a, b) -> np.ndarray:
    """Per-point loss weights (zero for points outside the two windows)."""
    m = radii.shape[0]
    q = quantile_split(m, eps)
    if q - k < 1 or q + k > m:
        raise IndexOutOfRange(f"quantile windows need k < eps*m and k < (1-eps)*m (m={m}, k={k})")
    order = np.argsort(radii, kind="stable")
    w = np.zeros(m)
    for i in range(1, k + 1):
        w[order[q - i - 1]] += a[i - 1]
        w[order[q + i - 1]] -= b[i - 1]
    return w


def quantile_loss(net: PwaNetwork, data, center, eps: float, k: int, a, b) -> float:
    out, _ = forward(net, np.atleast_2d(data))
    radii = output_norm(out - center, 2)
    return float(_quantile_weights(radii, eps, k, a, b) @ radii)


def _loss(net, data, center, cfg: TrainConfig) -> float:
    if cfg.loss == "svdd":
        return svdd_loss(net, data, center, cfg.decay)
    val = quantile_loss(net, data, center, cfg.eps, cfg.k, cfg.a, cfg.b)
    return val + 0.5 * cfg.decay * _frobenius(net)


def loss_gradient(net: PwaNetwork, data, center, cfg: TrainConfig) -> list[np.ndarray]:
    """Gradient of the configured loss with respect to every weight matrix.

    At a breakpoint the slope of the piece selected by the half-open
    convention is used.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    m = data.shape[0]
    inputs = []
    slopes = []
    y = data
    for layer in net.layers:
        inputs.append(y)
        w = y @ layer.weight.T
        if layer.bias is not None:
            w = w + layer.bias
        idx = layer.activation.piece_index(w)
        slopes.append(np.asarray(layer.activation.slopes)[idx])
        y = layer.activation(w)
    diff = y - center
    if cfg.loss == "svdd":
        delta = (2.0 / m) * diff
    else:
        radii = np.sqrt((diff * diff).sum(axis=1))
        weights = _quantile_weights(radii, cfg.eps, cfg.k, cfg.a, cfg.b)
        safe = np.where(radii > 0, radii, 1.0)
        delta = np.where(radii[:, None] > 0, diff * (weights / safe)[:, None], 0.0)
    grads = [None] * net.depth
    for li in range(net.depth - 1, -1, -1):
        layer = net.layers[li]
        dpre = delta * slopes[li]
        grads[li] = dpre.T @ inputs[li] + cfg.decay * layer.weight
        delta = dpre @ layer.weight
    return grads


def _with_weights(net: PwaNetwork, weights) -> PwaNetwork:
    return PwaNetwork([Layer(w, layer.activation, layer.bias)
                       for w, layer in zip(weights, net.layers)])


def _descend(net: PwaNetwork, data, center, cfg: TrainConfig) -> tuple[PwaNetwork, float]:
    weights = [layer.weight.copy() for layer in net.layers]
    for _ in range(cfg.epochs):
        grads = loss_gradient(net, data, center, cfg)
        for w, g in zip(weights, grads):
            w -= cfg.lr * g
        net = _with_weights(net, [w.copy() for w in weights])
    return net, _loss(net, data, center, cfg)


def _fold_normalization(net: PwaNetwork, shift: np.ndarray, scale: np.ndarray) -> PwaNetwork:
    """Absorb ``z = (c - shift) / scale`` into the first layer as a fixed bias."""
    first = net.layers[0]
    w1 = first.weight / scale
    b1 = -w1 @ shift
    return PwaNetwork([Layer(w1, first.activation, b1)] + list(net.layers[1:]))


def calibrate_radius(net: PwaNetwork, center, data, q: float, norm: int = 2) -> float:
    """The ``ceil(q m)``-th smallest training radius."""
    if not 0.0 < q <= 1.0:
        raise ValueError("quantile must lie in (0, 1]")
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    out, _ = forward(net, data)
    radii = np.sort(output_norm(out - center, norm))
    idx = max(1, math.ceil(q * radii.shape[0] - 1e-9))
    return float(radii[idx - 1])


def train(data, widths=None, activations=None, cfg: TrainConfig | None = None) -> TrainedModel:
    """Train ``cfg.restarts`` seeded networks and keep the lowest final loss.

    The center is fixed from each initial network and never updated.
    """
    cfg = cfg or TrainConfig()
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    m, n = data.shape
    if m < 2 or np.all(data == data[0]):
        raise DegenerateData("training scenarios are all identical")
    if widths is None:
        widths, activations = default_architecture(n)
    if cfg.loss == "quantile":
        q = quantile_split(m, cfg.eps)
        if q - cfg.k < 1 or q + cfg.k > m:
            raise IndexOutOfRange(f"m={m} too small for eps={cfg.eps}, k={cfg.k}")
    if cfg.normalize:
        shift = data.mean(axis=0)
        scale = data.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        shift, scale = np.zeros(n), np.ones(n)
    z = (data - shift) / scale

    best = None
    losses = []
    for rng in spawn_rngs(cfg.seed, cfg.restarts):
        net = init_network(n, widths, activations, rng)
        center = init_center(net, z)
        net, loss = _descend(net, z, center, cfg)
        losses.append(loss)
        if best is None or loss < best[2]:
            best = (net, center, loss)
    net, center, loss = best
    if cfg.normalize:
        net = _fold_normalization(net, shift, scale)
    radius = calibrate_radius(net, center, data, cfg.radius_quantile)
    return TrainedModel(net, center, radius, 2, loss, losses)

