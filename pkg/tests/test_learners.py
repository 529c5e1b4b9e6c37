import numpy as np
import pytest

from bilopt.learners import (
    FeatureWidthError,
    LogisticModel,
    Standardizer,
    UnsupportedChoiceError,
    penalized_logistic_loss_and_grad,
    train,
)
from bilopt.pipeline import auc
from conftest import make_blobs


def rng_(seed=0):
    return np.random.default_rng(seed)


class TestTrainExamples:
    def test_knn_k1_memorizes(self, blob_data):
        X, y = blob_data
        model = train("KNN", {"n_neigh": 1, "p": 2}, X, y, rng_())
        assert np.array_equal(model.predict_proba(X), y.astype(float))

    def test_nb_separated_blobs(self):
        X, y = make_blobs(n=200, width=2, sep=10.0, seed=1)
        model = train("NB", {"NBType": "gauss"}, X, y, rng_())
        assert auc(model.predict_proba(X), y) >= 0.99

    def test_dt_shatters_consistent_data(self, blob_data):
        X, y = blob_data
        model = train(
            "DT",
            {"max_e": 100, "criterion": "gini", "min_s_l": 1,
             "splitter": "auto", "min_a_p": 2},
            X, y, rng_(),
        )
        pred = (model.predict_proba(X) >= 0.5).astype(int)
        assert np.array_equal(pred, y)

    def test_single_class_prior_model(self):
        X = np.arange(12.0).reshape(6, 2)
        y = np.ones(6, dtype=int)
        model = train("NB", {}, X, y, rng_())
        assert "single_class_training" in model.flags
        assert np.allclose(model.predict_proba(X), 1.0)

    def test_unsupported_classifier(self, blob_data):
        X, y = blob_data
        with pytest.raises(UnsupportedChoiceError):
            train("SVM", {}, X, y, rng_())

    def test_unsupported_nb_type(self, blob_data):
        X, y = blob_data
        with pytest.raises(UnsupportedChoiceError):
            train("NB", {"NBType": "multi"}, X, y, rng_())


class TestPredictProba:
    def test_lr_zero_weights(self):
        scaler = Standardizer(np.zeros(3), np.ones(3))
        model = LogisticModel(scaler, np.zeros(3), 0.0)
        assert model.predict_proba(np.zeros((4, 3))).tolist() == [0.5] * 4

    def test_knn_vote_fraction(self):
        # three training points mirror the {1,1,0} neighbor vote
        X = np.array([[0.0], [0.1], [0.2]])
        y = np.array([1, 1, 0])
        model = train("KNN", {"n_neigh": 3, "p": 2}, X, y, rng_())
        assert model.predict_proba(np.array([[0.1]]))[0] == pytest.approx(2 / 3)

    def test_all_probas_in_unit_interval(self, blob_data):
        X, y = blob_data
        configs = {
            "NB": {"NBType": "gauss"},
            "LR": {"penalty": "L2", "fit_int": "true", "tol": 1e-3},
            "KNN": {"n_neigh": 5, "p": 3},
            "DT": {"max_e": 10, "criterion": "entropy", "min_s_l": 2,
                   "splitter": "sqrt", "min_a_p": 4},
            "Bagging": {"n_est": 10, "max_s": 0.8, "max_f": 0.8},
        }
        query = make_blobs(n=40, seed=9)[0]
        for cid, cfg in configs.items():
            p = train(cid, cfg, X, y, rng_(3)).predict_proba(query)
            assert np.all(p >= 0.0) and np.all(p <= 1.0), cid

    def test_width_mismatch(self, blob_data):
        X, y = blob_data
        model = train("NB", {}, X, y, rng_())
        with pytest.raises(FeatureWidthError):
            model.predict_proba(np.zeros((2, X.shape[1] + 1)))


class TestLogisticGradient:
    @pytest.mark.parametrize("penalty", ["L1", "L2"])
    def test_matches_finite_differences(self, penalty):
        rng = rng_(7)
        X = rng.normal(size=(30, 4))
        y = rng.integers(0, 2, size=30)
        eps = 1e-6
        for _ in range(20):
            # keep weights away from the L1 kink at zero
            w = rng.normal(size=5)
            w[np.abs(w) < 0.1] += 0.2
            _, grad = penalized_logistic_loss_and_grad(w, X, y, penalty, 0.01)
            for j in range(5):
                d = np.zeros(5)
                d[j] = eps
                lp, _ = penalized_logistic_loss_and_grad(w + d, X, y, penalty, 0.01)
                lm, _ = penalized_logistic_loss_and_grad(w - d, X, y, penalty, 0.01)
                fd = (lp - lm) / (2 * eps)
                assert abs(grad[j] - fd) <= 1e-4 * max(1.0, abs(fd))

    def test_lr_learns_separable_data(self):
        X, y = make_blobs(n=150, width=3, sep=8.0, seed=2)
        model = train(
            "LR", {"penalty": "L2", "fit_int": "true", "tol": 1e-5}, X, y, rng_()
        )
        assert auc(model.predict_proba(X), y) >= 0.99


class TestModelInvariants:
    def test_knn_scaling_invariance(self, blob_data):
        X, y = blob_data
        query = make_blobs(n=20, seed=5)[0]
        cfg = {"n_neigh": 7, "p": 1}
        base = train("KNN", cfg, X, y, rng_()).predict_proba(query)
        scaled = train("KNN", cfg, X * 37.0, y, rng_()).predict_proba(query * 37.0)
        assert np.allclose(base, scaled)

    def test_nb_feature_permutation_invariance(self, blob_data):
        X, y = blob_data
        query = make_blobs(n=20, seed=6)[0]
        perm = np.array([2, 0, 3, 1])
        base = train("NB", {}, X, y, rng_()).predict_proba(query)
        permuted = train("NB", {}, X[:, perm], y, rng_()).predict_proba(query[:, perm])
        assert np.allclose(base, permuted)

    def test_tree_deterministic(self, blob_data):
        X, y = blob_data
        cfg = {"max_e": 20, "criterion": "gini", "min_s_l": 1,
               "splitter": "sqrt", "min_a_p": 2}
        a = train("DT", cfg, X, y, rng_(4)).predict_proba(X)
        b = train("DT", cfg, X, y, rng_(4)).predict_proba(X)
        assert np.array_equal(a, b)

    def test_bagging_deterministic(self, blob_data):
        X, y = blob_data
        cfg = {"n_est": 12, "max_s": 0.9, "max_f": 0.75}
        a = train("Bagging", cfg, X, y, rng_(8)).predict_proba(X)
        b = train("Bagging", cfg, X, y, rng_(8)).predict_proba(X)
        assert np.array_equal(a, b)

    def test_bagging_is_member_mean(self, blob_data):
        X, y = blob_data
        model = train("Bagging", {"n_est": 5, "max_s": 1.0, "max_f": 1.0}, X, y, rng_(1))
        assert len(model.members) == 5

    def test_empty_training_data(self):
        with pytest.raises(ValueError):
            train("NB", {}, np.empty((0, 3)), np.empty(0, dtype=int), rng_())
