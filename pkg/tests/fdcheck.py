"""Central finite differences shared by the gradient tests."""

import numpy as np


# central differences at h = 1e-6 carry round-off of about 1e-9 on these losses
VANISHING = 1e-8


def numeric_grad(fn, x, h=1e-6):
    """d fn() / d x, perturbing ``x`` in place one entry at a time."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fn()
        flat[i] = old - h
        down = fn()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_error(a, b, floor=1e-10):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def end_to_end_error(seed, embedding_norm, alpha):
    """Worst relative error over all parameters of a small random network."""
    from heatup.loss_head import ce_loss
    from heatup.numerics import Rng
    from heatup.training import Architecture, all_parameters, backward_loss, forward, init_params

    rng = np.random.default_rng(seed)
    weight_norm = "off" if embedding_norm == "none" else "l2"
    arch = Architecture(4, 3, hidden=(5,), embedding_dim=3, embedding_norm=embedding_norm,
                        weight_norm=weight_norm)
    net, head = init_params(arch, Rng(seed))
    # clustered head columns keep alpha-scaled logits out of saturation
    head.weight.value[...] = rng.normal(size=(3, 1)) + rng.normal(size=(3, 3)) / alpha
    for layer in net.linear_layers:
        layer.bias.value[...] = rng.normal(size=layer.bias.value.shape) * 0.1
    if head.bias is not None:
        head.bias.value[...] = rng.normal(size=3) * 0.1
    x = rng.normal(size=(6, 4))
    y = rng.integers(0, 3, size=6)
    head.alpha = alpha

    def loss():
        return ce_loss(forward(net, head, x, "train")[2], y, alpha)

    net.zero_grad()
    head.zero_grad()
    z = forward(net, head, x, "train")[2]
    backward_loss(net, head, z, y, alpha)
    params = all_parameters(net, head)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        fd = numeric_grad(loss, p.value)
        if max(np.linalg.norm(g), np.linalg.norm(fd)) < VANISHING:
            # e.g. the bias in front of batch norm, whose gradient is exactly zero
            continue
        worst = max(worst, rel_error(g, fd))
    return worst
