"""TF-IDF + L2-regularized logistic regression baseline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.feature_extraction.text import TfidfVectorizer

from .corpus import split_sentences
from .errors import InputError
from .metrics import MetricReport, metric_report


def _words(text: str) -> list[str]:
    return [w for s in split_sentences(text) for w in s.split()]


@dataclass
class LogisticRegressionGD:
    l2: float = 1e-4
    lr: float = 2.0
    max_iter: int = 3000
    tol: float = 1e-7

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        n, d = X.shape
        self.coef_ = np.zeros(d)
        self.intercept_ = 0.0
        for _ in range(self.max_iter):
            z = X @ self.coef_ + self.intercept_
            residual = _sigmoid(z) - y
            grad_w = X.T @ residual / n + self.l2 * self.coef_
            grad_b = residual.mean()
            self.coef_ -= self.lr * grad_w
            self.intercept_ -= self.lr * grad_b
            if max(np.abs(grad_w).max(initial=0.0), abs(grad_b)) < self.tol:
                break
        return self

    def predict_proba(self, X):
        return _sigmoid(X @ self.coef_ + self.intercept_)


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def tfidf_features(train_texts: Sequence[str], test_texts: Sequence[str]):
    """Raw term counts times ln((1+N)/(1+df)) + 1, rows L2-normalized."""
    vec = TfidfVectorizer(analyzer=_words, smooth_idf=True, sublinear_tf=False, norm="l2")
    try:
        X_train = vec.fit_transform(train_texts)
    except ValueError as exc:
        raise InputError(f"empty TF-IDF vocabulary: {exc}") from exc
    return vec, X_train, vec.transform(test_texts)


def tfidf_logreg_baseline(train_texts, train_targets, test_texts, test_targets,
                          test_year: int = 0, seed="baseline", **lr_kwargs) -> MetricReport:
    _, X_train, X_test = tfidf_features(train_texts, test_texts)
    clf = LogisticRegressionGD(**lr_kwargs).fit(X_train, train_targets)
    proba = clf.predict_proba(X_test)
    return metric_report(proba, proba >= 0.5, np.asarray(test_targets) == 1, test_year, seed)
