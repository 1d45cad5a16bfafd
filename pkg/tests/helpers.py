"""Independent oracles shared by the test modules."""

import numpy as np

from liftsim.nnfa import backward, forward


def triple_loop_forward(net, x):
    a = [float(v) for v in x]
    for layer in net.layers:
        out = []
        for i in range(layer.n_out):
            z = float(layer.bias[i])
            for j in range(layer.n_in):
                z += float(layer.weight[i, j]) * a[j]
            out.append(max(z, 0.0) if layer.activation == "relu" else z)
        a = out
    return np.array(a)


def finite_difference_error(net, x, upstream, h=1e-5, abs_tol=1e-6, grads=None):
    """(max relative error, max absolute error) of gradients vs central differences.

    Entries whose absolute disagreement is at most ``abs_tol`` count as exact
    in the relative figure.  ``grads`` defaults to :func:`backward`.
    """
    if grads is None:
        grads = backward(net, x, upstream)
    loss = lambda: float(np.sum(upstream * forward(net, x)))
    worst = worst_abs = 0.0
    for layer, (dw, db) in zip(net.layers, grads):
        for param, analytic in ((layer.weight, dw), (layer.bias, db)):
            flat = param.reshape(-1)
            ana = analytic.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + h
                up = loss()
                flat[i] = keep - h
                down = loss()
                flat[i] = keep
                num = (up - down) / (2 * h)
                diff = abs(num - ana[i])
                worst_abs = max(worst_abs, diff)
                if diff > abs_tol:
                    worst = max(worst, diff / max(abs(num), abs(ana[i])))
    return worst, worst_abs


def random_net(sizes, seed):
    """Seeded net with nonzero biases, so no pre-activation sits exactly on the ReLU kink."""
    from liftsim.nnfa import init_network

    net = init_network(sizes, seed=seed)
    rng = np.random.default_rng(seed + 7919)
    for layer in net.layers:
        layer.bias = rng.normal(scale=0.1, size=layer.bias.shape)
    return net


def min_kink_distance(net, x):
    a = np.asarray(x, dtype=float)
    dist = np.inf
    for layer in net.layers:
        z = layer.weight @ a + layer.bias
        if layer.activation == "relu":
            dist = min(dist, float(np.abs(z).min()))
            z = np.maximum(z, 0.0)
        a = z
    return dist
