"""Scikit-learn style classifier wrapping the tokenizer + encoder + train loop."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.exceptions import NotFittedError

from .model import ModelConfig, count_parameters, init_params
from .positional import PositionalScheme, scheme_from_name
from .tokenizers import tokenizer_from_descriptor
from .training import predict_batches, predict_proba_batches, train


class TransformerSequenceClassifier(BaseEstimator, ClassifierMixin):
    """Transformer encoder classifier over raw DNA sequences.

    ``X`` is a sequence of DNA strings (not a feature matrix); the estimator
    owns tokenization, so it composes with sklearn model-selection utilities
    that treat ``X`` as an opaque list.

    Parameters
    ----------
    tokenizer : descriptor string (``"1mer"``..``"8mer"``, ``"bpe"``,
        ``"bpe:<vocabfile>"``) or an unfitted tokenizer estimator to clone.
    scheme : positional scheme name ``"sape"`` | ``"alibi"`` | ``"rope"``, or
        a PositionalScheme instance.
    validation_fraction : share of the training data held out for per-epoch
        model selection when fit is not given an explicit dev set.
    dtype : numpy dtype for parameters and activations; float32 roughly
        halves training time, float64 is exactly reproducible at double
        precision.
    """

    def __init__(
        self,
        tokenizer: str | object = "6mer",
        scheme: str | PositionalScheme = "rope",
        num_layers: int = 12,
        d_model: int = 768,
        num_heads: int = 12,
        d_ff: int | None = None,
        dropout: float = 0.1,
        max_len: int | None = None,
        epochs: int = 3,
        batch_size: int = 32,
        lr: float = 1e-4,
        weight_decay: float = 0.01,
        validation_fraction: float = 0.1,
        bpe_merges: int = 4092,
        seed: int = 0,
        dtype: str = "float32",
    ):
        self.tokenizer = tokenizer
        self.scheme = scheme
        self.num_layers = num_layers
        self.d_model = d_model
        self.num_heads = num_heads
        self.d_ff = d_ff
        self.dropout = dropout
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.validation_fraction = validation_fraction
        self.bpe_merges = bpe_merges
        self.seed = seed
        self.dtype = dtype

    def _resolve_tokenizer(self):
        if isinstance(self.tokenizer, str):
            return tokenizer_from_descriptor(
                self.tokenizer, max_len=self.max_len, bpe_merges=self.bpe_merges
            )
        return clone(self.tokenizer)

    def _resolve_scheme(self) -> PositionalScheme:
        if isinstance(self.scheme, str):
            return scheme_from_name(self.scheme, self.num_heads)
        return self.scheme

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("TransformerSequenceClassifier is not fitted; call fit first")

    def fit(self, X: Sequence[str], y, dev: tuple[Sequence[str], Sequence[int]] | None = None):
        """Train from scratch on sequences ``X`` and integer labels ``y``.

        ``dev`` optionally supplies an explicit (sequences, labels) dev split
        for per-epoch selection; otherwise ``validation_fraction`` of the
        training data is held out.
        """
        X = list(X)
        y = np.asarray(y)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} sequences but {len(y)} labels")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")

        rng = np.random.default_rng(self.seed)
        self.tokenizer_ = self._resolve_tokenizer().fit(X)
        if dev is not None:
            dev_X, dev_y = list(dev[0]), np.asarray(dev[1])
            dev_idx = np.searchsorted(self.classes_, dev_y)
            train_X, train_y = X, y_idx
        else:
            order = rng.permutation(len(X))
            n_dev = max(1, int(round(self.validation_fraction * len(X))))
            dev_take, train_take = order[:n_dev], order[n_dev:]
            if len(train_take) == 0:
                raise ValueError("validation_fraction leaves no training data")
            train_X = [X[i] for i in train_take]
            train_y = y_idx[train_take]
            dev_X = [X[i] for i in dev_take]
            dev_idx = y_idx[dev_take]

        train_ids = self.tokenizer_.transform(train_X)
        dev_ids = self.tokenizer_.transform(dev_X)
        self.config_ = ModelConfig(
            vocab_size=self.tokenizer_.vocab_size_,
            num_classes=len(self.classes_),
            max_len=self.tokenizer_.max_len_,
            num_layers=self.num_layers,
            d_model=self.d_model,
            num_heads=self.num_heads,
            d_ff=self.d_ff,
            dropout=self.dropout,
            scheme=self._resolve_scheme(),
        )
        params = init_params(self.config_, rng, dtype=np.dtype(self.dtype))
        result = train(
            params,
            self.config_,
            train_ids,
            np.asarray(train_y),
            dev_ids,
            np.asarray(dev_idx),
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_peak=self.lr,
            weight_decay=self.weight_decay,
            seed=self.seed,
        )
        self.params_ = result.params
        self.result_ = result
        self.dev_mcc_history_ = result.dev_mcc_history
        self.n_parameters_ = count_parameters(self.config_)
        return self

    def predict(self, X: Sequence[str]) -> np.ndarray:
        self._check_fitted()
        ids = self.tokenizer_.transform(list(X))
        preds = predict_batches(self.params_, self.config_, ids)
        return self.classes_[preds]

    def predict_proba(self, X: Sequence[str]) -> np.ndarray:
        self._check_fitted()
        ids = self.tokenizer_.transform(list(X))
        return predict_proba_batches(self.params_, self.config_, ids)
