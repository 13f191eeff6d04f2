"""sklearn-style facade: GEDI as a clustering estimator.

fit trains the joint objective on the rows of X; predict/predict_proba expose
the cluster head, transform exposes the learned embedding, and score_samples
the learned log-density up to the (intractable) normalizer.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import data as data_mod
from .config import default_config
from .nn import encode, energy, predict
from .train import Task, run_training


class GediClustering(ClusterMixin, BaseEstimator):
    """Joint energy-based and augmentation-invariant clustering.

    A single MLP backbone is trained with three pressures: match the data
    density (SGLD-based generative term), predict the same cluster for a point
    and its Gaussian-jittered copy, and keep the batch-mean cluster marginal
    uniform. Defaults reproduce the 2-D toy configuration.

    Parameters mirror the flat run config; see the package presets for image
    settings. random_state seeds data order, init, augmentation, and SGLD.
    """

    def __init__(self, n_clusters=2, encoder_hidden=(100, 100), embed_dim=2,
                 head_hidden=(4,), temperature=1.0, activation="relu",
                 w_gen=1.0, w_inv=50.0, w_prior=10.0, aug_sigma=0.03,
                 sgld_steps=1, sgld_step_size=5e-5, sgld_noise=0.01,
                 buffer_size=10000, reinit_prob=0.05, learning_rate=1e-3,
                 weight_decay=0.0, n_iterations=7000, batch_size=400,
                 random_state=0):
        self.n_clusters = n_clusters
        self.encoder_hidden = encoder_hidden
        self.embed_dim = embed_dim
        self.head_hidden = head_hidden
        self.temperature = temperature
        self.activation = activation
        self.w_gen = w_gen
        self.w_inv = w_inv
        self.w_prior = w_prior
        self.aug_sigma = aug_sigma
        self.sgld_steps = sgld_steps
        self.sgld_step_size = sgld_step_size
        self.sgld_noise = sgld_noise
        self.buffer_size = buffer_size
        self.reinit_prob = reinit_prob
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.n_iterations = n_iterations
        self.batch_size = batch_size
        self.random_state = random_state

    def _config(self, n_rows):
        cfg = default_config()
        cfg["model"].update({
            "n_clusters": int(self.n_clusters),
            "encoder_hidden": tuple(int(v) for v in self.encoder_hidden),
            "embed_dim": int(self.embed_dim),
            "head_hidden": tuple(int(v) for v in self.head_hidden),
            "temperature": float(self.temperature),
            "activation": self.activation,
        })
        cfg["loss"].update({"w_gen": float(self.w_gen), "w_inv": float(self.w_inv),
                            "w_prior": float(self.w_prior), "w_nesy": 0.0})
        cfg["sgld"].update({"steps": int(self.sgld_steps),
                            "step_size": float(self.sgld_step_size),
                            "noise": float(self.sgld_noise),
                            "reinit_prob": float(self.reinit_prob),
                            "buffer_size": int(self.buffer_size)})
        cfg["optim"].update({"learning_rate": float(self.learning_rate),
                             "weight_decay": float(self.weight_decay)})
        cfg["train"].update({"iterations": int(self.n_iterations),
                             "batch_size": min(int(self.batch_size), n_rows),
                             "seed": int(self.random_state), "eval_every": 0})
        return cfg

    def fit(self, X, y=None):
        """Train on the rows of X; y is ignored (present for API compatibility)."""
        X = check_array(X, dtype=np.float64)
        if len(X) < 2:
            raise ValueError(f"need at least 2 samples to fit, got {len(X)}")
        sigma = float(self.aug_sigma)
        task = Task(
            train_x=X, test_x=X, train_labels=None, test_labels=None,
            augment=lambda x, rng: data_mod.augment_gaussian(x, sigma, rng),
            bounds=data_mod.data_bounds(X))
        result = run_training(self._config(len(X)), task=task)
        self.params_ = result.params
        self.n_features_in_ = X.shape[1]
        self.labels_ = predict(self.params_, X).data.argmax(axis=1)
        return self

    def _validate_for_predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but this estimator was fitted "
                f"with {self.n_features_in_}")
        return X

    def predict(self, X):
        """Hard cluster assignments, argmax of p(y|x)."""
        return self.predict_proba(X).argmax(axis=1)

    def predict_proba(self, X):
        X = self._validate_for_predict(X)
        return predict(self.params_, X).data

    def transform(self, X):
        """Learned embeddings enc(x), shape (n, embed_dim)."""
        X = self._validate_for_predict(X)
        return encode(self.params_, X).data

    def score_samples(self, X):
        """Unnormalized log-density, -E(x); higher means more in-distribution."""
        X = self._validate_for_predict(X)
        return -energy(self.params_, X).data

    def score(self, X, y=None):
        """Mean unnormalized log-density of X."""
        return float(np.mean(self.score_samples(X)))
