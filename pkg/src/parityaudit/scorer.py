"""Ridge-penalised logistic baseline scorer for tabular data."""
import numpy as np
import pandas as pd
from scipy import special
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._logistic import newton_logistic
from .exceptions import DataError


class LogisticScorer(ClassifierMixin, BaseEstimator):
    """L2-regularised logistic regression fit by Newton's method.

    Features are standardised internally; the intercept is not penalised.

    >>> X = np.array([[0.0], [1.0], [2.0], [3.0]])
    >>> LogisticScorer(l2=1.0).fit(X, [0, 0, 1, 1]).predict([[0.0], [3.0]]).tolist()
    [0, 1]
    """

    def __init__(self, l2=1.0, max_iter=100, tol=1e-8):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        classes = np.unique(y)
        if not set(classes.tolist()) <= {0.0, 1.0}:
            raise DataError("the baseline scorer needs a binary 0/1 target")
        self.classes_ = np.array([0, 1])
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        Z = (X - self.mean_) / self.scale_
        design = np.column_stack([np.ones(len(Z)), Z])
        beta, self.n_iter_, _ = newton_logistic(design, y, l2=self.l2,
                                                max_iter=self.max_iter, tol=self.tol)
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return self.intercept_ + ((X - self.mean_) / self.scale_) @ self.coef_

    def predict_proba(self, X):
        p = special.expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


class TabularScorer:
    """Logistic scorer on a data frame with one-hot encoded categoricals.

    Columns in ``exclude`` (group attribute, identifiers) never reach the
    model. Encoded columns are fixed at fit time; unseen levels at scoring
    time are ignored.
    """

    def __init__(self, target, exclude=(), l2=1.0):
        self.target = target
        self.exclude = tuple(exclude)
        self.l2 = l2

    def _encode(self, frame):
        X = frame.drop(columns=[c for c in (self.target, *self.exclude) if c in frame])
        X = pd.get_dummies(X, dtype=float)
        if hasattr(self, "columns_"):
            X = X.reindex(columns=self.columns_, fill_value=0.0)
        return X

    def fit(self, frame):
        y = frame[self.target].to_numpy()
        X = self._encode(frame)
        self.columns_ = list(X.columns)
        self.model_ = LogisticScorer(l2=self.l2).fit(X.to_numpy(float), y)
        return self

    def score(self, frame):
        return self.model_.predict_proba(self._encode(frame).to_numpy(float))[:, 1]


def fit_baseline_scorer(train, target, exclude=(), l2=1.0):
    """Fit a :class:`TabularScorer` on a training frame."""
    return TabularScorer(target, exclude, l2).fit(train)
