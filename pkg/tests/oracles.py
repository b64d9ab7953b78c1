"""Independent reference computations used by several test modules."""

import numpy as np

from ccc.autoencoder import Network, backward, forward, reconstruction_grad, reconstruction_loss
from ccc.clustering import GroundtruthOverlay, clustering_grad, clustering_loss, label_weights


def random_problem(seed: int, m: int = 9, k: int = 3, coverage: float = 0.5):
    """A small network, data, fixed centers/labels and an overlay per latent channel."""
    rng = np.random.default_rng(seed)
    net = Network.initialize(seed)
    for p in net.parameters():
        p += rng.normal(scale=0.1, size=p.shape)
    x = rng.normal(size=(m, 14))
    centers = [np.sort(rng.normal(size=k)) for _ in range(3)]
    labels = [rng.integers(0, k, size=m) for _ in range(3)]
    overlays = []
    for _ in range(3):
        sets = [set(rng.choice(k, size=rng.integers(1, k + 1), replace=False).tolist())
                if rng.random() < coverage else None for _ in range(m)]
        overlays.append(GroundtruthOverlay.from_sets(sets, k))
    return net, x, centers, labels, overlays


def joint_loss(net, x, centers, labels, overlays) -> float:
    cache = forward(net, x)
    total = reconstruction_loss(cache.x, cache.reconstruction)
    for c in range(3):
        total += clustering_loss(cache.latent[:, c], centers[c], labels[c], overlays[c], label_weights(overlays[c]))
    return total


def joint_grad(net, x, centers, labels, overlays) -> list[np.ndarray]:
    cache = forward(net, x)
    g_lat = np.zeros_like(cache.latent)
    for c in range(3):
        g_lat[:, c] = clustering_grad(cache.latent[:, c], centers[c], labels[c], overlays[c],
                                      label_weights(overlays[c]))
    return backward(net, cache, reconstruction_grad(cache.x, cache.reconstruction), g_lat)


def finite_difference(loss, net, h: float = 1e-6) -> list[np.ndarray]:
    """Central differences of ``loss(net)`` for every parameter entry."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss(net)
            flat[i] = keep - h
            down = loss(net)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_error(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    va = np.concatenate([v.ravel() for v in a])
    vb = np.concatenate([v.ravel() for v in b])
    scale = max(np.linalg.norm(va), np.linalg.norm(vb), 1e-12)
    return float(np.linalg.norm(va - vb) / scale)
