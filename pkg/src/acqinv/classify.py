"""Patch-level tissue classification with the embedding trunk.

The classifier reuses the exact layer stack of the embedding network,
with the final linear layer sized to the number of tissue classes and
trained under softmax cross-entropy with the same RMSprop engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, RMSprop, build_patch_network
from .phantom import PatchSet
from .seeding import STAGE_TRAIN, as_generator, derive_seed


@dataclass(frozen=True)
class TissueClassifierConfig:
    epochs: int = 32
    batch_size: int = 128
    learning_rate: float = 1e-3
    rho: float = 0.9
    epsilon: float = 1e-8
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")


class TissueClassifier:
    """A trained patch classifier: trunk network plus fixed class list."""

    def __init__(self, net: Network, classes: np.ndarray):
        self.net = net
        self.classes_ = np.asarray(classes)

    def scores(self, inputs) -> np.ndarray:
        x = inputs.network_inputs() if isinstance(inputs, PatchSet) else np.asarray(inputs)
        return self.net.predict(x)

    def predict(self, inputs) -> np.ndarray:
        """Class labels by highest score; ties fall to the lowest class index."""
        return self.classes_[np.argmax(self.scores(inputs), axis=1)]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def train_tissue_classifier(
    patches, labels=None, config: TissueClassifierConfig = TissueClassifierConfig()
) -> tuple[TissueClassifier, list[float]]:
    """Train a softmax cross-entropy patch classifier.

    Accepts a ``PatchSet`` (labels taken from its tissue column) or an
    (n, 15, 15, 1) array plus a label vector. Returns the classifier and
    its per-epoch mean losses. Deterministic given the config seed.
    """
    if isinstance(patches, PatchSet):
        x = patches.network_inputs()
        y = patches.tissues.astype(np.int64)
    else:
        x = np.asarray(patches, dtype=np.float64)
        if labels is None:
            raise ValueError("labels are required when patches are a plain array")
        y = np.asarray(labels).astype(np.int64)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"inputs {x.shape} and labels {y.shape} do not align")
    classes, class_idx = np.unique(y, return_inverse=True)
    if classes.shape[0] < 2:
        raise ValueError(f"need at least 2 classes to train, got {classes.shape[0]}")

    net = build_patch_network(
        out_dim=classes.shape[0],
        dropout=config.dropout,
        seed=derive_seed(config.seed, STAGE_TRAIN, 10),
    )
    optimizer = RMSprop(lr=config.learning_rate, rho=config.rho, epsilon=config.epsilon)
    shuffle_rng = as_generator(config.seed, STAGE_TRAIN, 11)
    dropout_rng = as_generator(config.seed, STAGE_TRAIN, 12)

    n = x.shape[0]
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            xb = x[batch]
            tb = class_idx[batch]
            logits, caches = net.forward(xb, train=True, rng=dropout_rng)
            probs = softmax(logits)
            batch_loss = float(
                -np.mean(np.log(np.maximum(probs[np.arange(tb.shape[0]), tb], 1e-300)))
            )
            if not np.isfinite(batch_loss):
                raise ArithmeticError(
                    f"non-finite classifier loss at epoch {epoch + 1}, "
                    f"batch starting at example {start}"
                )
            glogits = probs.copy()
            glogits[np.arange(tb.shape[0]), tb] -= 1.0
            glogits /= tb.shape[0]
            grads, _ = net.backward(caches, glogits)
            optimizer.step(net, grads)
            loss_total += batch_loss * tb.shape[0]
        epoch_losses.append(loss_total / n)
    return TissueClassifier(net, classes), epoch_losses
