"""Siamese training of the patch embedding.

Two pipeline passes share one parameter set (a single ``Network``
instance); pairs of patches are pushed through it and scored with a
margin contrastive loss on the L1 embedding distance:

    loss = y * d^2 + (1 - y) * max(0, m - d),   d = ||f(a) - f(b)||_1

Similar pairs (y=1) are pulled together quadratically; dissimilar pairs
(y=0) are pushed apart until the margin m, beyond which they incur no
loss. After training, single patches are embedded without forming pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .network import Network, RMSprop, build_patch_network
from .pairs import PairSet
from .phantom import PatchSet
from .seeding import STAGE_TRAIN, as_generator, derive_seed


@dataclass(frozen=True)
class SiameseConfig:
    margin: float = 1.0
    epochs: int = 32
    batch_size: int = 128
    learning_rate: float = 2e-3
    rho: float = 0.9
    epsilon: float = 1e-8
    dropout: float = 0.2
    out_dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.margin <= 0.0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.out_dim < 1:
            raise ValueError(f"out_dim must be at least 1, got {self.out_dim}")


@dataclass
class TrainHistory:
    """Per-epoch training statistics.

    ``loss`` is the train-mode mean pair loss over the epoch;
    the distance columns are eval-mode mean L1 embedding distances of
    similar and dissimilar pairs measured at the end of each epoch.
    """

    loss: list[float] = field(default_factory=list)
    mean_sim_dist: list[float] = field(default_factory=list)
    mean_dis_dist: list[float] = field(default_factory=list)

    def epochs_completed(self) -> int:
        return len(self.loss)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "mean_sim_dist", "mean_dis_dist"])
            for i in range(len(self.loss)):
                writer.writerow([
                    i + 1,
                    repr(self.loss[i]),
                    repr(self.mean_sim_dist[i]),
                    repr(self.mean_dis_dist[i]),
                ])

    @staticmethod
    def from_csv(path) -> "TrainHistory":
        hist = TrainHistory()
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                hist.loss.append(float(row["loss"]))
                hist.mean_sim_dist.append(float(row["mean_sim_dist"]))
                hist.mean_dis_dist.append(float(row["mean_dis_dist"]))
        return hist


def l1_distance(fa: np.ndarray, fb: np.ndarray):
    """Sum of absolute coordinate differences along the last axis."""
    fa = np.asarray(fa, dtype=np.float64)
    fb = np.asarray(fb, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ValueError(f"feature shapes differ: {fa.shape} vs {fb.shape}")
    d = np.abs(fa - fb).sum(axis=-1)
    return float(d) if d.ndim == 0 else d


def siamese_loss(fa: np.ndarray, fb: np.ndarray, y, margin: float = 1.0):
    """Per-pair contrastive loss; scalar for single pairs, array for batches."""
    if margin <= 0.0:
        raise ValueError(f"margin must be positive, got {margin}")
    d = l1_distance(fa, fb)
    y = np.asarray(y, dtype=np.float64)
    loss = y * d ** 2 + (1.0 - y) * np.maximum(0.0, margin - d)
    return float(loss) if np.ndim(loss) == 0 else loss


def siamese_loss_grad(fa: np.ndarray, fb: np.ndarray, y, margin: float = 1.0):
    """Subgradients of the pair loss with respect to both embeddings.

    sign(0) is taken as 0, and at d = margin the zero (past-margin)
    branch is used, so the gradient there is 0 for dissimilar pairs.
    """
    if margin <= 0.0:
        raise ValueError(f"margin must be positive, got {margin}")
    fa = np.asarray(fa, dtype=np.float64)
    fb = np.asarray(fb, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ValueError(f"feature shapes differ: {fa.shape} vs {fb.shape}")
    y = np.asarray(y, dtype=np.float64)
    d = np.abs(fa - fb).sum(axis=-1)
    s = np.sign(fa - fb)
    # dloss/dd: similar pairs 2d; dissimilar pairs -1 strictly inside the margin.
    dldd = y * 2.0 * d + (1.0 - y) * np.where(d < margin, -1.0, 0.0)
    ga = dldd[..., np.newaxis] * s
    return ga, -ga


def train_siamese(pairs: PairSet, config: SiameseConfig = SiameseConfig()) -> tuple[Network, TrainHistory]:
    """Train the shared-weight embedding on a labeled pair set.

    Both sides of every pair are forwarded through the same ``Network``
    instance (one parameter storage, not copies) with independent dropout
    draws; per-batch mean-loss gradients from the two passes accumulate
    into that single parameter set before each RMSprop step. Deterministic
    for a given config seed.
    """
    n_pairs = len(pairs)
    if pairs.n_similar() == 0 or pairs.n_dissimilar() == 0:
        raise ValueError(
            f"need at least one similar and one dissimilar pair, got "
            f"{pairs.n_similar()} similar / {pairs.n_dissimilar()} dissimilar"
        )
    net = build_patch_network(
        out_dim=config.out_dim,
        dropout=config.dropout,
        seed=derive_seed(config.seed, STAGE_TRAIN, 0),
    )
    optimizer = RMSprop(lr=config.learning_rate, rho=config.rho, epsilon=config.epsilon)
    shuffle_rng = as_generator(config.seed, STAGE_TRAIN, 1)
    dropout_rng = as_generator(config.seed, STAGE_TRAIN, 2)

    pooled_x = pairs.pooled.network_inputs()
    y_all = pairs.y
    history = TrainHistory()

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n_pairs)
        loss_total = 0.0
        for start in range(0, n_pairs, config.batch_size):
            batch = order[start:start + config.batch_size]
            xa = pooled_x[pairs.index_a[batch]]
            xb = pooled_x[pairs.index_b[batch]]
            y = y_all[batch]
            fa, cache_a = net.forward(xa, train=True, rng=dropout_rng)
            fb, cache_b = net.forward(xb, train=True, rng=dropout_rng)
            pair_losses = siamese_loss(fa, fb, y, config.margin)
            batch_loss = float(np.mean(pair_losses))
            if not np.isfinite(batch_loss):
                raise ArithmeticError(
                    f"non-finite loss {batch_loss} at epoch {epoch + 1}, "
                    f"batch starting at pair {start}"
                )
            ga, gb = siamese_loss_grad(fa, fb, y, config.margin)
            scale = 1.0 / batch.shape[0]
            grads_a, _ = net.backward(cache_a, ga * scale)
            grads_b, _ = net.backward(cache_b, gb * scale)
            grads = [
                {k: grads_a[i][k] + grads_b[i][k] for k in grads_a[i]}
                for i in range(len(grads_a))
            ]
            optimizer.step(net, grads)
            loss_total += batch_loss * batch.shape[0]
        history.loss.append(loss_total / n_pairs)
        sim_d, dis_d = _separation_stats(net, pairs)
        history.mean_sim_dist.append(sim_d)
        history.mean_dis_dist.append(dis_d)
    return net, history


def _separation_stats(net: Network, pairs: PairSet) -> tuple[float, float]:
    """Eval-mode mean L1 distances of similar and dissimilar pairs."""
    feats = extract_features(net, pairs.pooled)
    d = np.abs(feats[pairs.index_a] - feats[pairs.index_b]).sum(axis=1)
    sim = d[pairs.y == 1.0]
    dis = d[pairs.y == 0.0]
    return float(sim.mean()), float(dis.mean())


def extract_features(net: Network, patches, batch_size: int = 512) -> np.ndarray:
    """Eval-mode embeddings of single patches, shape (n, out_dim).

    The forward kernels compute each row independently of batch
    composition, so the feature of a patch is bitwise identical whether
    it is embedded alone, in a batch, or as either member of a pair.
    """
    if isinstance(patches, PatchSet):
        x = patches.network_inputs()
    else:
        x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"expected (n, 15, 15, 1) patch inputs, got shape {x.shape}")
    outputs = []
    for start in range(0, x.shape[0], batch_size):
        y, _ = net.forward(x[start:start + batch_size], train=False)
        outputs.append(y)
    if not outputs:
        out_dim = net.layers[-1].out_dim
        return np.zeros((0, out_dim), dtype=np.float64)
    return np.concatenate(outputs, axis=0)
