"""Small models and byte fixtures shared across test modules."""

import numpy as np

from ktn.harness.model import AvgPool, Conv, Dense, Flatten, MaxPool, ModelSpec, Relu, Softmax, check_shapes


def micro_model(seed=11, classes=3):
    """Two conv layers with every layer type, scaled so the softmax is not saturated."""
    rng = np.random.default_rng(seed)
    params = {
        "c1.w": 0.4 * rng.normal(size=(3, 2, 3, 3)),
        "c1.b": 0.1 * rng.normal(size=3),
        "c2.w": 0.3 * rng.normal(size=(4, 3, 3, 3)),
        "c2.b": 0.1 * rng.normal(size=4),
        "fc.w": 0.5 * rng.normal(size=(classes, 16)),
        "fc.b": 0.1 * rng.normal(size=classes),
    }
    layers = (
        Conv("c1", "c1.w", "c1.b", (1, 1), (1, 1)),
        Relu(),
        AvgPool(2, 2),
        Conv("c2", "c2.w", "c2.b", (1, 1), (1, 1)),
        Relu(),
        MaxPool(2, 2),
        Flatten(),
        Dense("fc", "fc.w", "fc.b"),
        Softmax(),
    )
    model = ModelSpec(layers, params, (2, 8, 8))
    check_shapes(model)
    return model


def cifar_record(label, pixels):
    """One 3073-byte CIFAR-10 record; ``pixels`` broadcasts to (3, 32, 32) uint8."""
    body = np.broadcast_to(np.asarray(pixels, dtype=np.uint8), (3, 32, 32))
    return bytes([label]) + body.tobytes()
