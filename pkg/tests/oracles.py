"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from cogload.nn import NetworkConfig, backward, forward, init_network, loss


def numeric_gradients(params, x, y, l2_coeff, h=1e-5):
    grads = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + h
            up = loss(forward(params, x)[0], y, params, l2_coeff).l_total
            arr[i] = old - h
            down = loss(forward(params, x)[0], y, params, l2_coeff).l_total
            arr[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def gradient_check(seed, l2_coeff=0.0):
    """Max elementwise relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    n_in = int(rng.integers(2, 6))
    hidden = tuple(int(v) for v in rng.integers(2, 6, size=int(rng.integers(1, 4))))
    params = init_network(NetworkConfig(input_dim=n_in, hidden_sizes=hidden, seed=seed))
    for b in params.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    x = rng.normal(size=(7, n_in))
    y = rng.integers(0, 2, size=(7, 2))
    _, cache = forward(params, x)
    analytic = backward(cache, y, l2_coeff).arrays()
    numeric = numeric_gradients(params, x, y, l2_coeff)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-7)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
