"""Gradient-descent training fixture for the end-to-end tests.

Full-batch softmax cross-entropy with plain gradient descent on the
package's dense network type. Deliberately minimal (no momentum, no
schedule, no shuffling) so a fixed seed reproduces runs bit for bit.
Only the tests use this; training is not a library feature.
"""

import numpy as np

from lrcompress import LinearLayer, Network


def init_layers(rng, dims, scale=1.0):
    """He-scaled random (W, b) pairs for the layer sizes in dims.

    A scale below 1 keeps the initial spectrum small relative to what
    training builds up, which mimics the decaying singular spectra of
    well-trained networks and makes truncation meaningful.
    """
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        w = rng.normal(size=(d_out, d_in)) * np.sqrt(2.0 / d_in) * scale
        layers.append((w, np.zeros(d_out)))
    return layers


def softmax(z):
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def train(layers, x, labels, epochs, lr, trainable=None, weight_decay=0.0):
    """Run full-batch gradient descent; returns updated (W, b) copies.

    trainable limits updates to the given layer indices, which is how the
    fine-tuning stage freezes the feature layer. weight_decay shrinks the
    weights toward zero each step (biases are left alone).
    """
    layers = [(w.copy(), b.copy()) for w, b in layers]
    n_layers = len(layers)
    if trainable is None:
        trainable = set(range(n_layers))
    p = x.shape[1]
    onehot = np.zeros((layers[-1][0].shape[0], p))
    onehot[labels, np.arange(p)] = 1.0
    for _ in range(epochs):
        hidden = [x]
        pre = []
        h = x
        for i, (w, b) in enumerate(layers):
            z = w @ h + b[:, None]
            pre.append(z)
            h = np.maximum(z, 0.0) if i < n_layers - 1 else z
            hidden.append(h)
        grad_z = (softmax(pre[-1]) - onehot) / p
        for i in range(n_layers - 1, -1, -1):
            grad_w = grad_z @ hidden[i].T + weight_decay * layers[i][0]
            grad_b = grad_z.sum(axis=1)
            if i > 0:
                grad_z = (layers[i][0].T @ grad_z) * (pre[i - 1] > 0)
            if i in trainable:
                layers[i] = (layers[i][0] - lr * grad_w, layers[i][1] - lr * grad_b)
    return layers


def to_network(layers):
    return Network(tuple(LinearLayer(w, b) for w, b in layers))


def make_task(rng, features, classes, active):
    """Class prototypes for a synthetic task.

    Only the first *active* feature dimensions carry signal; the rest
    stay exactly zero, which is how the target task leaves half the
    source features inactive.
    """
    prototypes = np.zeros((classes, features))
    prototypes[:, :active] = rng.normal(size=(classes, active))
    return prototypes


def sample_batch(rng, prototypes, samples, active, noise=0.4):
    """ReLU-clipped noisy prototype samples: non-negative, columns are samples."""
    features = prototypes.shape[1]
    labels = rng.integers(0, prototypes.shape[0], size=samples)
    jitter = np.zeros((features, samples))
    jitter[:active] = rng.normal(size=(active, samples)) * noise
    x = np.maximum(prototypes[labels].T + jitter, 0.0)
    return x, labels
