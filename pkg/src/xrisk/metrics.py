"""Classification and rank-correlation metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import InputError, NotComputableError


@dataclass
class MetricReport:
    test_year: int
    f1_risky: float
    precision: float
    recall: float
    macro_f1: float
    kendall_tau_b: float
    spearman_rho: float
    n_test: int
    seed: int | str

    FIELDS = ("test_year", "seed", "n_test", "f1_risky", "precision", "recall",
              "macro_f1", "kendall_tau_b", "spearman_rho")

    def as_row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in self.FIELDS}


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def classification_metrics(predicted, actual) -> tuple[float, float, float, float]:
    """Precision, recall and F1 of the positive (Risky = 1) class plus macro-F1.

    Zero denominators yield 0.
    """
    pred = np.asarray(predicted, dtype=bool)
    true = np.asarray(actual, dtype=bool)
    if pred.shape != true.shape or pred.ndim != 1:
        raise InputError(f"length mismatch: {pred.shape} vs {true.shape}")
    if len(pred) == 0:
        raise InputError("empty prediction list")

    def prf(p, t):
        tp = int(np.sum(p & t))
        fp = int(np.sum(p & ~t))
        fn = int(np.sum(~p & t))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return precision, recall, _f1(precision, recall)

    precision, recall, f1 = prf(pred, true)
    _, _, f1_neg = prf(~pred, ~true)
    return precision, recall, f1, (f1 + f1_neg) / 2


def kendall_tau(scores, labels) -> float:
    """Kendall's tau-b with the usual tie corrections."""
    x = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise InputError("need at least 2 observations")
    iu = np.triu_indices(len(x), k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    # (n0 - n1) and (n0 - n2): pairs not tied in x, pairs not tied in y
    untied_x = int(np.count_nonzero(sx))
    untied_y = int(np.count_nonzero(sy))
    if untied_x == 0 or untied_y == 0:
        raise NotComputableError("tau-b undefined: one side is entirely tied")
    concordant_minus_discordant = float(np.sum(sx * sy))
    return concordant_minus_discordant / math.sqrt(untied_x * untied_y)


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share their mean rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    sorted_v = v[order]
    ranks = np.empty(len(v))
    start = 0
    while start < len(v):
        stop = start
        while stop + 1 < len(v) and sorted_v[stop + 1] == sorted_v[start]:
            stop += 1
        ranks[order[start:stop + 1]] = (start + stop) / 2 + 1
        start = stop + 1
    return ranks


def spearman_rho(scores, labels) -> float:
    x = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise InputError("need at least 2 observations")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise NotComputableError("rho undefined: zero rank variance")
    return float(rx @ ry) / math.sqrt(sxx * syy)


def _or_nan(fn, *args) -> float:
    try:
        return fn(*args)
    except NotComputableError:
        return float("nan")


def metric_report(probabilities, predicted, actual, test_year: int, seed) -> MetricReport:
    """Full report; rank metrics pair the probability with the 0/1 label.

    A rank metric that is not computable (one side fully tied) is NaN.
    """
    precision, recall, f1, macro = classification_metrics(predicted, actual)
    labels = np.asarray(actual, dtype=np.float64)
    return MetricReport(test_year=test_year, f1_risky=f1, precision=precision, recall=recall,
                        macro_f1=macro,
                        kendall_tau_b=_or_nan(kendall_tau, probabilities, labels),
                        spearman_rho=_or_nan(spearman_rho, probabilities, labels),
                        n_test=len(labels), seed=seed)


def mean_report(reports: list[MetricReport]) -> MetricReport:
    if not reports:
        raise InputError("no reports to average")
    numeric = [f.name for f in fields(MetricReport)
               if f.name not in ("test_year", "seed", "n_test")]
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in numeric}
    return MetricReport(test_year=reports[0].test_year, n_test=reports[0].n_test,
                        seed="mean", **means)
