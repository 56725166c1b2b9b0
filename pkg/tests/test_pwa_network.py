import itertools
import math

import numpy as np
import pytest

from uncset.errors import DimensionMismatch, FormatError, InvalidActivation, NotPositiveDefinite
from uncset.pwa_network import (ActivationPattern, Layer, PwaActivation, PwaNetwork,
                                dumps_network, encode_binary_affine, encode_ellipsoid,
                                encode_polyhedron, forward, loads_network, membership,
                                pattern_of, patterns_of, region_count_bound, region_of)

from conftest import naive_forward, random_relu_net

RELU = PwaActivation.relu()
IDENT = PwaActivation.identity()


def test_activation_validation():
    with pytest.raises(InvalidActivation):
        PwaActivation((1.0, 2.0), (0.0, 0.0), (1.0,))  # jump at 1
    with pytest.raises(InvalidActivation):
        PwaActivation((1.0, 1.0, 1.0), (0.0, 0.0, 0.0), (1.0, 0.5))
    with pytest.raises(InvalidActivation):
        PwaActivation((), (), ())
    with pytest.raises(InvalidActivation):
        PwaActivation((1.0,), (0.0, 1.0), ())


def test_relu_matches_max(rng):
    w = rng.normal(size=1000)
    assert np.array_equal(RELU(w), np.maximum(w, 0.0))


def test_hat_zero_only_at_zero_and_one():
    hat = PwaActivation.hat()
    assert hat(0.0) == 0.0 and hat(1.0) == 0.0
    w = np.array([-2.0, -0.1, 0.2, 0.5, 0.8, 1.3, 4.0])
    assert np.all(hat(w) > 0)


def test_forward_trivial():
    net = PwaNetwork.from_weights([np.eye(2)], [RELU])
    out, pre = forward(net, [1.0, -1.0])
    assert np.array_equal(out, [1.0, 0.0])
    assert np.array_equal(pre[0], [1.0, -1.0])
    with pytest.raises(DimensionMismatch):
        forward(net, [1.0, 2.0, 3.0])


def test_forward_matches_naive_loop(rng):
    for _ in range(10):
        net = random_relu_net(rng, 3, [5, 4, 2])
        for c in rng.normal(size=(20, 3)):
            assert np.allclose(net(c), naive_forward(net, c), atol=1e-12)
    # batched and single-point evaluations agree
    data = rng.normal(size=(7, 3))
    batch, _ = forward(net, data)
    assert np.allclose(batch, np.array([net(c) for c in data]))


def test_pattern_half_open_convention():
    net = PwaNetwork.from_weights([np.eye(1)], [RELU])
    assert pattern_of(net, [-0.5]).pieces == ((0,),)
    assert pattern_of(net, [0.0]).pieces == ((1,),)


def test_pattern_reevaluation(rng):
    net = random_relu_net(rng, 4, [6, 6, 3])
    for c in rng.normal(size=(50, 4)):
        u = pattern_of(net, c)
        y = c
        for layer, idx in zip(net.layers, u.pieces):
            w = layer.weight @ y + layer.bias
            act = layer.activation
            y = np.array([act.slopes[i] for i in idx]) * w + np.array([act.intercepts[i] for i in idx])
        assert np.allclose(y, net(c), atol=1e-12)


def test_region_single_neuron():
    net = PwaNetwork.from_weights([np.eye(1)], [RELU])
    active = region_of(net, ActivationPattern(((1,),)))
    assert active.contains([2.0]) and not active.contains([-1.0])
    assert np.allclose(active.output([3.0]), [3.0])
    inactive = region_of(net, ActivationPattern(((0,),)))
    assert inactive.contains([-2.0]) and not inactive.contains([1.0])
    assert np.allclose(inactive.output([-3.0]), [0.0])


def test_region_consistency(rng):
    for _ in range(10):
        net = random_relu_net(rng, 3, [5, 5, 2], last_identity=True)
        c0 = rng.normal(size=3)
        reg = region_of(net, pattern_of(net, c0))
        assert reg.contains(c0)
        assert np.allclose(reg.output(c0), net(c0), atol=1e-9)


def test_region_pattern_shape_checked():
    net = PwaNetwork.from_weights([np.eye(2)], [RELU])
    with pytest.raises((DimensionMismatch, ValueError)):
        region_of(net, ActivationPattern(((1,),)))


def test_patterns_of_matches_pattern_of(rng):
    net = random_relu_net(rng, 3, [4, 4])
    data = rng.normal(size=(30, 3))
    assert patterns_of(net, data) == [pattern_of(net, c) for c in data]


def test_membership_identity():
    net = PwaNetwork.from_weights([np.eye(2)], [IDENT])
    assert membership(net, [0.0, 0.0], 1.0, 2, [1.0, 0.0])
    assert not membership(net, [0.0, 0.0], 1.0, 2, [1.1, 0.0])
    assert membership(net, [1.0, 1.0], 0.0, 2, [1.0, 1.0])
    assert not membership(net, [1.0, 1.0], 0.0, 2, [1.0, 1.0 + 1e-6])


def test_membership_independent_path(rng):
    net = random_relu_net(rng, 3, [5, 3])
    center = rng.normal(size=3)
    for c in rng.normal(size=(100, 3)):
        r = np.sqrt(np.sum((naive_forward(net, c) - center) ** 2))
        for radius in (0.5, 1.5, 3.0):
            if abs(r - radius) > 1e-9:
                assert membership(net, center, radius, 2, c) == (r <= radius)


def test_encode_ellipsoid_examples():
    enc = encode_ellipsoid(np.eye(2), np.zeros(2))
    assert membership(*enc[:1], enc.center, enc.radius, enc.norm, [1.0, 0.0])
    assert not membership(enc.network, enc.center, enc.radius, enc.norm, [1.1, 0.0])
    enc = encode_ellipsoid(np.diag([4.0, 1.0]), np.zeros(2))
    assert membership(enc.network, enc.center, enc.radius, enc.norm, [0.5, 0.0])
    with pytest.raises(NotPositiveDefinite):
        encode_ellipsoid(np.diag([1.0, -1.0]), np.zeros(2))


def test_encode_polyhedron_examples():
    enc = encode_polyhedron([[1.0]], [0.0])
    assert membership(enc.network, enc.center, enc.radius, enc.norm, [-1.0])
    assert not membership(enc.network, enc.center, enc.radius, enc.norm, [1.0])
    empty = encode_polyhedron([], [], n=3)
    assert all(membership(empty.network, empty.center, 0.0, 2, c) for c in np.eye(3) * 1e6)


def test_encode_binary_examples():
    enc = encode_binary_affine([[1.0, 1.0]], [1.0])
    member = lambda c: membership(enc.network, enc.center, enc.radius, enc.norm, c)
    assert member([1.0, 0.0]) and member([0.0, 1.0])
    assert not member([1.0, 1.0]) and not member([0.5, 0.5])
    enc = encode_binary_affine([[1.0]], [0.5])
    assert not any(membership(enc.network, enc.center, 0.0, 2, [v]) for v in (0.0, 1.0))


def test_encode_binary_bruteforce(rng):
    for _ in range(5):
        n = int(rng.integers(2, 7))
        a = rng.integers(-2, 3, size=(2, n)).astype(float)
        b = a @ rng.integers(0, 2, size=n)
        enc = encode_binary_affine(a, b)
        for bits in itertools.product((0.0, 1.0), repeat=n):
            c = np.array(bits)
            expect = bool(np.all(a @ c == b))
            assert membership(enc.network, enc.center, 0.0, 2, c) == expect


def test_region_count_bound():
    assert region_count_bound(PwaNetwork.from_weights([np.ones((3, 2))], [RELU])) == 9
    assert region_count_bound(PwaNetwork.from_weights([np.ones((3, 2))], [IDENT])) == 1
    k3 = PwaActivation((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0))
    net = PwaNetwork.from_weights([np.ones((2, 2)), np.ones((2, 2))], [k3, k3])
    assert region_count_bound(net) == 256
    big = PwaNetwork.from_weights([np.ones((50, 40))] * 1 + [np.ones((50, 50))] * 2, [RELU] * 3)
    assert region_count_bound(big) == 2**63 - 1


def test_network_text_roundtrip(rng):
    net = random_relu_net(rng, 3, [4, 2])
    hat_net = PwaNetwork([Layer(rng.normal(size=(2, 3)), PwaActivation.hat(), None)])
    for original in (net, hat_net):
        text = dumps_network(original)
        back = loads_network(text)
        assert dumps_network(back) == text
        x = rng.normal(size=3)
        assert np.array_equal(back(x), original(x))


@pytest.mark.parametrize("text", [
    "",
    "pwanet v2 1 1\n",
    "pwanet v1 1 1\nlayer 1 1 0\n1.0\nact 1\n1 0\n",
    "pwanet v1 1 1\nlayer 1 2 0\n1.0 2.0\nact 1\n1 0 inf\n",
    "pwanet v1 1 1\nlayer 1 1 0\nabc\nact 1\n1 0 inf\n",
])
def test_network_text_rejects(text):
    with pytest.raises((FormatError, DimensionMismatch, InvalidActivation)):
        loads_network(text)
