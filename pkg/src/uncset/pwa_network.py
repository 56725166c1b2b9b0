"""Piecewise-affine feedforward networks and their activation-region algebra.

A network ``f`` maps ``c`` through layers ``y <- act(W @ y + b)``. Fixing the
affine piece every neuron uses (an :class:`ActivationPattern`) turns ``f`` into
a single affine map that is valid on a polyhedron of inputs; :func:`region_of`
builds both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, FormatError, InvalidActivation
from .numlin import as_matrix, as_vector, cholesky

MEMBERSHIP_SLACK = 1e-12
CONTINUITY_TOL = 1e-9
REGION_COUNT_CAP = 2**63 - 1


@dataclass(frozen=True)
class PwaActivation:
    """Continuous piecewise-affine scalar function.

    Piece ``i`` is ``slopes[i] * w + intercepts[i]`` on
    ``[breakpoints[i-1], breakpoints[i])``; the outer breakpoints are -inf/+inf
    and are not stored.
    """

    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slopes", tuple(float(a) for a in self.slopes))
        object.__setattr__(self, "intercepts", tuple(float(g) for g in self.intercepts))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        k = len(self.slopes)
        if k < 1:
            raise InvalidActivation("activation needs at least one piece")
        if len(self.intercepts) != k or len(self.breakpoints) != k - 1:
            raise InvalidActivation(
                f"{k} pieces need {k} intercepts and {k - 1} interior breakpoints")
        vals = self.slopes + self.intercepts + self.breakpoints
        if not all(math.isfinite(v) for v in vals):
            raise InvalidActivation("activation parameters must be finite")
        bp = self.breakpoints
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise InvalidActivation("breakpoints must be strictly increasing")
        for i, b in enumerate(bp):
            left = self.slopes[i] * b + self.intercepts[i]
            right = self.slopes[i + 1] * b + self.intercepts[i + 1]
            if abs(left - right) > CONTINUITY_TOL * max(1.0, abs(left)):
                raise InvalidActivation(f"discontinuous at breakpoint {b}: {left} vs {right}")

    @classmethod
    def relu(cls) -> "PwaActivation":
        return cls((0.0, 1.0), (0.0, 0.0), (0.0,))

    @classmethod
    def identity(cls) -> "PwaActivation":
        return cls((1.0,), (0.0,), ())

    @classmethod
    def hat(cls) -> "PwaActivation":
        """Zero exactly at 0 and 1, positive everywhere else."""
        return cls((-1.0, 1.0, -1.0, 1.0), (0.0, 0.0, 1.0, -1.0), (0.0, 0.5, 1.0))

    @property
    def k(self) -> int:
        return len(self.slopes)

    def lower(self, i: int) -> float:
        return -math.inf if i == 0 else self.breakpoints[i - 1]

    def upper(self, i: int) -> float:
        return math.inf if i == self.k - 1 else self.breakpoints[i]

    def piece_index(self, w) -> np.ndarray:
        # side="right" puts w == breakpoint into the piece to its right
        return np.searchsorted(np.asarray(self.breakpoints), w, side="right")

    def __call__(self, w):
        w = np.asarray(w, dtype=np.float64)
        idx = self.piece_index(w)
        return np.asarray(self.slopes)[idx] * w + np.asarray(self.intercepts)[idx]


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    activation: PwaActivation
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = as_matrix(self.weight, name="weight")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = as_vector(self.bias, w.shape[0], name="bias")
            b.setflags(write=False)
            object.__setattr__(self, "bias", b)

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]


class PwaNetwork:
    """Immutable stack of :class:`Layer` objects."""

    def __init__(self, layers: Sequence[Layer]):
        layers = tuple(layers)
        if not layers:
            raise DimensionMismatch("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.d_in != prev.d_out:
                raise DimensionMismatch(
                    f"layer input {nxt.d_in} does not match previous output {prev.d_out}")
        self._layers = layers

    @classmethod
    def from_weights(cls, weights, activations, biases=None) -> "PwaNetwork":
        if isinstance(activations, PwaActivation):
            activations = [activations] * len(weights)
        biases = biases if biases is not None else [None] * len(weights)
        return cls([Layer(w, a, b) for w, a, b in zip(weights, activations, biases)])

    @property
    def layers(self) -> tuple[Layer, ...]:
        return self._layers

    @property
    def input_dim(self) -> int:
        return self._layers[0].d_in

    @property
    def output_dim(self) -> int:
        return self._layers[-1].d_out

    @property
    def depth(self) -> int:
        return len(self._layers)

    @property
    def widths(self) -> list[int]:
        return [layer.d_out for layer in self._layers]

    @property
    def has_bias(self) -> bool:
        return any(layer.bias is not None for layer in self._layers)

    def __call__(self, c) -> np.ndarray:
        return forward(self, c)[0]

    def __repr__(self):
        dims = "x".join(str(d) for d in [self.input_dim] + self.widths)
        return f"PwaNetwork({dims})"


class ActivationPattern(NamedTuple):
    """Piece index (0-based) of every neuron, one tuple per layer."""

    pieces: tuple[tuple[int, ...], ...]

    @classmethod
    def from_arrays(cls, arrays: Iterable) -> "ActivationPattern":
        return cls(tuple(tuple(int(i) for i in a) for a in arrays))


@dataclass
class AffineRegion:
    """Polyhedron ``{c : a_ub @ c <= b_ub}`` and the affine map valid on it.

    ``maps[l]`` is the pre-activation map of layer ``l + 1``; ``maps[-1]`` is
    the output map.
    """

    pattern: ActivationPattern
    maps: list[tuple[np.ndarray, np.ndarray]]
    a_ub: np.ndarray
    b_ub: np.ndarray

    @property
    def out_weight(self) -> np.ndarray:
        return self.maps[-1][0]

    @property
    def out_offset(self) -> np.ndarray:
        return self.maps[-1][1]

    def output(self, c) -> np.ndarray:
        return np.asarray(c, dtype=np.float64) @ self.out_weight.T + self.out_offset

    def slack(self, c) -> np.ndarray:
        return self.b_ub - self.a_ub @ np.asarray(c, dtype=np.float64)

    def contains(self, c, tol: float = 1e-9) -> bool:
        s = self.slack(c)
        scale = 1.0 + np.abs(self.b_ub)
        return bool(np.all(s >= -tol * scale))


def forward(net: PwaNetwork, c) -> tuple[np.ndarray, list[np.ndarray]]:
    """Network output and the per-layer pre-activations.

    ``c`` may be one point (1-D) or a batch of points (rows of a 2-D array).
    """
    y = np.asarray(c, dtype=np.float64)
    if y.shape[-1] != net.input_dim:
        raise DimensionMismatch(f"input has dimension {y.shape[-1]}, network expects {net.input_dim}")
    pre = []
    for layer in net.layers:
        w = y @ layer.weight.T
        if layer.bias is not None:
            w = w + layer.bias
        pre.append(w)
        y = layer.activation(w)
    return y, pre


def pattern_of(net: PwaNetwork, c) -> ActivationPattern:
    _, pre = forward(net, as_vector(c, net.input_dim, name="c"))
    return ActivationPattern.from_arrays(
        layer.activation.piece_index(w) for layer, w in zip(net.layers, pre))


def patterns_of(net: PwaNetwork, data) -> list[ActivationPattern]:
    """Pattern of every row of ``data`` (one batched forward pass)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    _, pre = forward(net, data)
    idx = [layer.activation.piece_index(w) for layer, w in zip(net.layers, pre)]
    return [ActivationPattern.from_arrays(layer_idx[r] for layer_idx in idx)
            for r in range(data.shape[0])]


def _piece_params(act: PwaActivation, idx: np.ndarray):
    slopes = np.asarray(act.slopes)[idx]
    intercepts = np.asarray(act.intercepts)[idx]
    bp = np.asarray(act.breakpoints)
    lo = np.concatenate([[-math.inf], bp])[idx]
    hi = np.concatenate([bp, [math.inf]])[idx]
    return slopes, intercepts, lo, hi


def region_of(net: PwaNetwork, u: ActivationPattern) -> AffineRegion:
    """Affine maps and inequalities of the region where ``u`` is active.

    Strict upper inequalities are returned closed; rows whose bound is
    infinite are dropped.
    """
    if len(u.pieces) != net.depth:
        raise DimensionMismatch("pattern depth does not match network")
    n = net.input_dim
    w_t = np.eye(n)
    g_t = np.zeros(n)
    maps = []
    rows, rhs = [], []
    for layer, piece in zip(net.layers, u.pieces):
        idx = np.asarray(piece, dtype=int)
        if idx.shape != (layer.d_out,) or np.any(idx < 0) or np.any(idx >= layer.activation.k):
            raise DimensionMismatch("pattern does not fit layer")
        w_pre = layer.weight @ w_t
        g_pre = layer.weight @ g_t
        if layer.bias is not None:
            g_pre = g_pre + layer.bias
        maps.append((w_pre, g_pre))
        slopes, intercepts, lo, hi = _piece_params(layer.activation, idx)
        low_ok = np.isfinite(lo)
        if low_ok.any():
            rows.append(-w_pre[low_ok])
            rhs.append(g_pre[low_ok] - lo[low_ok])
        up_ok = np.isfinite(hi)
        if up_ok.any():
            rows.append(w_pre[up_ok])
            rhs.append(hi[up_ok] - g_pre[up_ok])
        w_t = slopes[:, None] * w_pre
        g_t = slopes * g_pre + intercepts
    maps.append((w_t, g_t))
    a_ub = np.vstack(rows) if rows else np.zeros((0, n))
    b_ub = np.concatenate(rhs) if rhs else np.zeros(0)
    return AffineRegion(u, maps, a_ub, b_ub)


def output_norm(v, p) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if p == 1:
        return np.abs(v).sum(axis=-1)
    if p == 2:
        return np.sqrt((v * v).sum(axis=-1))
    raise ValueError(f"unsupported norm {p!r}")


def membership(net: PwaNetwork, center, radius: float, p, c):
    """``||f(c) - center||_p <= radius`` for one point or a batch of rows."""
    center = as_vector(center, net.output_dim, name="center")
    out, _ = forward(net, c)
    return output_norm(out - center, p) <= radius + MEMBERSHIP_SLACK


class EncodedSet(NamedTuple):
    network: PwaNetwork
    center: np.ndarray
    radius: float
    norm: int


def encode_ellipsoid(sigma, a) -> EncodedSet:
    """Network whose unit ball is ``{c : (c-a)' sigma (c-a) <= 1}``."""
    sigma = as_matrix(sigma, name="sigma")
    a = as_vector(a, sigma.shape[0], name="a")
    v = cholesky(sigma)
    n = a.shape[0]
    ident = PwaActivation.identity()
    net = PwaNetwork([Layer(np.eye(n), ident, -a), Layer(v, ident)])
    return EncodedSet(net, np.zeros(n), 1.0, 2)


def encode_polyhedron(a, b, n: int | None = None) -> EncodedSet:
    """Network whose zero set is ``{c : a @ c <= b}``."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        if n is None:
            raise DimensionMismatch("dimension needed for an empty constraint list")
        a = np.zeros((0, n))
    a = as_matrix(a, (None, n), name="A")
    b = as_vector(b, a.shape[0], name="b")
    net = PwaNetwork([Layer(a, PwaActivation.relu(), -b)])
    return EncodedSet(net, np.zeros(a.shape[0]), 0.0, 2)


def encode_binary_affine(a, b) -> EncodedSet:
    """Network whose zero set is ``{c in {0,1}^N : a @ c == b}``."""
    a = as_matrix(a, name="A")
    b = as_vector(b, a.shape[0], name="b")
    n = a.shape[1]
    w = np.vstack([np.eye(n), a, a])
    bias = np.concatenate([np.zeros(n), -b, -b + 1.0])
    net = PwaNetwork([Layer(w, PwaActivation.hat(), bias)])
    return EncodedSet(net, np.zeros(w.shape[0]), 0.0, 2)


def region_count_bound(net: PwaNetwork) -> int:
    """``(d (k-1))^(N L)`` with ``d``/``k`` the largest width/piece count.

    A network of affine activations has a single region. Saturates at
    ``REGION_COUNT_CAP``.
    """
    d = max(net.widths)
    k = max(layer.activation.k for layer in net.layers)
    base = d * (k - 1)
    if base <= 1:
        return 1
    exponent = net.input_dim * net.depth
    if exponent * math.log2(base) >= 63:
        return REGION_COUNT_CAP
    return min(base ** exponent, REGION_COUNT_CAP)


def _fmt(x: float) -> str:
    return "inf" if x == math.inf else repr(float(x))


def network_lines(net: PwaNetwork) -> Iterator[str]:
    yield f"pwanet v1 {net.input_dim} {net.depth}"
    for layer in net.layers:
        has_bias = int(layer.bias is not None)
        yield f"layer {layer.d_out} {layer.d_in} {has_bias}"
        for row in layer.weight:
            yield " ".join(_fmt(x) for x in row)
        if layer.bias is not None:
            yield " ".join(_fmt(x) for x in layer.bias)
        act = layer.activation
        yield f"act {act.k}"
        for i in range(act.k):
            yield f"{_fmt(act.slopes[i])} {_fmt(act.intercepts[i])} {_fmt(act.upper(i))}"


def dumps_network(net: PwaNetwork) -> str:
    return "\n".join(network_lines(net)) + "\n"


def _floats(line: str, count: int, what: str) -> list[float]:
    parts = line.split()
    if len(parts) != count:
        raise FormatError(f"{what}: expected {count} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"{what}: {exc}") from None


def parse_network(lines: Iterator[str]) -> PwaNetwork:
    """Read one network from an iterator of lines, consuming only its lines."""
    def take():
        try:
            return next(lines).strip()
        except StopIteration:
            raise FormatError("unexpected end of network data") from None

    head = take().split()
    if len(head) != 4 or head[:2] != ["pwanet", "v1"]:
        raise FormatError(f"bad header {' '.join(head)!r}")
    n, depth = int(head[2]), int(head[3])
    layers = []
    for li in range(depth):
        parts = take().split()
        if len(parts) != 4 or parts[0] != "layer":
            raise FormatError(f"bad layer line in layer {li + 1}")
        d_out, d_in, has_bias = int(parts[1]), int(parts[2]), parts[3] == "1"
        w = np.array([_floats(take(), d_in, f"layer {li + 1} weights") for _ in range(d_out)])
        w = w.reshape(d_out, d_in)
        bias = np.array(_floats(take(), d_out, f"layer {li + 1} bias")) if has_bias else None
        parts = take().split()
        if len(parts) != 2 or parts[0] != "act":
            raise FormatError(f"bad activation line in layer {li + 1}")
        k = int(parts[1])
        triples = [_floats(take(), 3, f"layer {li + 1} activation") for _ in range(k)]
        if triples[-1][2] != math.inf:
            raise FormatError("last activation piece must end at inf")
        act = PwaActivation([t[0] for t in triples], [t[1] for t in triples],
                            [t[2] for t in triples[:-1]])
        layers.append(Layer(w, act, bias))
    net = PwaNetwork(layers)
    if net.input_dim != n:
        raise FormatError(f"header says N={n}, first layer has {net.input_dim} inputs")
    return net


def loads_network(text: str) -> PwaNetwork:
    return parse_network(iter(text.splitlines()))
