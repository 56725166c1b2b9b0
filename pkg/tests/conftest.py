import numpy as np
import pytest

from uncset.pwa_network import PwaActivation, PwaNetwork


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_relu_net(rng, n, widths, bias=True, last_identity=False):
    weights, acts, biases = [], [], []
    d = n
    for i, w in enumerate(widths):
        weights.append(rng.normal(size=(w, d)))
        biases.append(rng.normal(size=w) if bias else None)
        last = i == len(widths) - 1
        acts.append(PwaActivation.identity() if (last and last_identity) else PwaActivation.relu())
        d = w
    return PwaNetwork.from_weights(weights, acts, biases if bias else None)


def naive_forward(net, c):
    """Scalar-loop evaluation, deliberately independent of the vectorized code."""
    y = [float(v) for v in c]
    for layer in net.layers:
        act = layer.activation
        out = []
        for r in range(layer.d_out):
            w = sum(layer.weight[r, j] * y[j] for j in range(layer.d_in))
            if layer.bias is not None:
                w += layer.bias[r]
            piece = 0
            for b in act.breakpoints:
                if w >= b:
                    piece += 1
            out.append(act.slopes[piece] * w + act.intercepts[piece])
        y = out
    return np.array(y)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(LINES):
            terminalreporter.write_line(LINES[k])
