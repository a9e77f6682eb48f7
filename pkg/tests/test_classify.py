"""Softmax patch classifier: learning, determinism, and edge cases."""

import numpy as np
import pytest

from acqinv.classify import (
    TissueClassifier,
    TissueClassifierConfig,
    softmax,
    train_tissue_classifier,
)
from acqinv.svm import tissue_error

from conftest import make_patchset


def toy_patches(n_per=20, noise=0.03, seed=0):
    return make_patchset([1] * n_per + [2] * n_per + [3] * n_per, noise=noise, seed=seed)


class TestSoftmax:
    def test_rows_sum_to_one(self, rng):
        probs = softmax(rng.normal(size=(10, 4)))
        assert np.allclose(probs.sum(axis=1), 1.0)
        assert np.all(probs > 0.0)

    def test_shift_invariant(self, rng):
        logits = rng.normal(size=(5, 3))
        assert np.allclose(softmax(logits), softmax(logits + 100.0))

    def test_large_logits_stable(self):
        probs = softmax(np.array([[1000.0, 0.0, -1000.0]]))
        assert np.isfinite(probs).all()
        assert probs[0, 0] == pytest.approx(1.0)


class TestTrainTissueClassifier:
    def test_toy_training_error_low(self):
        patches = toy_patches()
        config = TissueClassifierConfig(epochs=64, batch_size=16, dropout=0.0, seed=0)
        model, losses = train_tissue_classifier(patches, config=config)
        err = tissue_error(model, patches, patches.tissues)
        assert err <= 0.05
        assert len(losses) == 64
        assert losses[-1] <= losses[0]

    def test_zero_epochs_is_chance_level(self):
        # untrained model on many patches should hover near 2/3 error
        patches = toy_patches(n_per=500, noise=0.2, seed=1)
        model, losses = train_tissue_classifier(
            patches, config=TissueClassifierConfig(epochs=0, seed=2)
        )
        assert losses == []
        err = tissue_error(model, patches, patches.tissues)
        assert abs(err - 2.0 / 3.0) <= 0.15

    def test_same_seed_identical_weights(self):
        patches = toy_patches()
        config = TissueClassifierConfig(epochs=3, batch_size=16, seed=7)
        a, losses_a = train_tissue_classifier(patches, config=config)
        b, losses_b = train_tissue_classifier(patches, config=config)
        assert losses_a == losses_b
        for la, lb in zip(a.net.layers, b.net.layers):
            for name in la.params:
                assert np.array_equal(la.params[name], lb.params[name])

    def test_array_inputs_with_labels(self):
        patches = toy_patches(n_per=10)
        x = patches.network_inputs()
        model, _ = train_tissue_classifier(
            x, patches.tissues, config=TissueClassifierConfig(epochs=2, seed=0)
        )
        assert model.predict(x).shape == (30,)

    def test_array_inputs_require_labels(self):
        patches = toy_patches(n_per=10)
        with pytest.raises(ValueError):
            train_tissue_classifier(patches.network_inputs())

    def test_single_class_rejected(self):
        patches = make_patchset([2] * 10, noise=0.01)
        with pytest.raises(ValueError):
            train_tissue_classifier(patches)

    def test_predicts_original_label_values(self):
        # classes are whatever labels were given, not remapped indices
        patches = toy_patches(n_per=15)
        model, _ = train_tissue_classifier(
            patches, config=TissueClassifierConfig(epochs=8, dropout=0.0, seed=0)
        )
        assert set(np.unique(model.predict(patches))) <= {1, 2, 3}
        assert model.classes_.tolist() == [1, 2, 3]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TissueClassifierConfig(epochs=-1)
        with pytest.raises(ValueError):
            TissueClassifierConfig(batch_size=0)

    def test_misaligned_labels_rejected(self):
        patches = toy_patches(n_per=5)
        with pytest.raises(ValueError):
            train_tissue_classifier(patches.network_inputs(), np.zeros(7))


class TestTissueClassifier:
    def test_tie_breaks_to_lowest_class(self):
        net_like = _ZeroNet(out_dim=3)
        model = TissueClassifier(net_like, np.array([4, 6, 9]))
        assert np.all(model.predict(np.zeros((5, 15, 15, 1))) == 4)

    def test_scores_accept_patchset(self):
        patches = toy_patches(n_per=5)
        model, _ = train_tissue_classifier(
            patches, config=TissueClassifierConfig(epochs=1, seed=0)
        )
        s1 = model.scores(patches)
        s2 = model.scores(patches.network_inputs())
        assert np.array_equal(s1, s2)


class _ZeroNet:
    def __init__(self, out_dim):
        self.out_dim = out_dim

    def predict(self, x):
        return np.zeros((x.shape[0], self.out_dim))
