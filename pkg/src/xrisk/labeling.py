"""Post-event volatility from three-factor residuals, risk labels and rolling splits."""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, SingularFitError

WINDOW_START = 6
WINDOW_END = 252
MIN_OBSERVATIONS = 60
TRAINING_YEARS = 5


class Label(str, enum.Enum):
    RISKY = "Risky"
    NON_RISKY = "NonRisky"
    EXCLUDED = "Excluded"


@dataclass(frozen=True)
class ThreeFactorFit:
    alpha: float
    beta_mkt: float
    beta_smb: float
    beta_hml: float
    residuals: np.ndarray
    rmse: float

    @property
    def n_obs(self) -> int:
        return len(self.residuals)

    @property
    def betas(self) -> tuple[float, float, float]:
        return self.beta_mkt, self.beta_smb, self.beta_hml


@dataclass(frozen=True)
class VolatilityRecord:
    doc_id: str
    volatility: float
    n_obs: int


@dataclass(frozen=True)
class RiskLabel:
    doc_id: str
    label: Label
    bin: int


@dataclass(frozen=True)
class DatasetSplit:
    test_year: int
    train_doc_ids: tuple[str, ...]
    test_doc_ids: tuple[str, ...]


@dataclass(frozen=True)
class FactorRow:
    mkt_excess: float
    smb: float
    hml: float
    rf: float


def fit_three_factor(excess_returns, factors) -> ThreeFactorFit:
    """OLS of excess returns on an intercept and (mkt_excess, smb, hml).

    Solved through a QR decomposition of the design matrix. Factor columns that
    are identically zero carry no information and get a zero coefficient; any
    other rank deficiency raises :class:`SingularFitError`.
    """
    y = np.asarray(excess_returns, dtype=np.float64)
    X = np.asarray(factors, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 3:
        raise InputError(f"factors must have shape (n, 3), got {X.shape}")
    if y.ndim != 1 or len(y) != len(X):
        raise InputError(f"misaligned lengths: {len(y)} returns vs {len(X)} factor rows")
    n = len(y)
    if n < 5:
        raise InputError(f"need at least 5 observations, got {n}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise InputError("non-finite returns or factors")

    active = [j for j in range(3) if np.any(X[:, j] != 0.0)]
    design = np.column_stack([np.ones(n), X[:, active]])
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0) * n:
        raise SingularFitError("design matrix is rank deficient")
    coef_active = np.linalg.solve(r, q.T @ y)
    coef = np.zeros(4)
    coef[0] = coef_active[0]
    coef[[j + 1 for j in active]] = coef_active[1:]

    residuals = y - design @ coef_active
    rmse = math.sqrt(float(np.mean(residuals ** 2)))
    return ThreeFactorFit(alpha=float(coef[0]), beta_mkt=float(coef[1]),
                          beta_smb=float(coef[2]), beta_hml=float(coef[3]),
                          residuals=residuals, rmse=rmse)


def event_window(filing_date: dt.date, trading_calendar: Sequence[dt.date],
                 start: int = WINDOW_START, end: int = WINDOW_END) -> list[dt.date]:
    """Trading dates at offsets ``start..end`` (inclusive) after ``filing_date``.

    Offset 0 is the last trading date on or before the filing date.
    """
    base = bisect.bisect_right(trading_calendar, filing_date) - 1
    lo = max(base + start, 0)
    hi = base + end + 1
    return list(trading_calendar[lo:hi])


def post_event_volatility(doc_id: str, filing_date: dt.date, returns: Mapping[dt.date, float],
                          factors: Mapping[dt.date, FactorRow],
                          trading_calendar: Sequence[dt.date],
                          min_obs: int = MIN_OBSERVATIONS) -> VolatilityRecord | None:
    """Three-factor RMSE over the +6..+252 trading-day window.

    Returns ``None`` when fewer than ``min_obs`` aligned observations exist;
    the filing is then left unlabeled.
    """
    dates = [d for d in event_window(filing_date, trading_calendar) if d in returns and d in factors]
    if len(dates) < min_obs:
        return None
    y = [returns[d] - factors[d].rf for d in dates]
    X = [(factors[d].mkt_excess, factors[d].smb, factors[d].hml) for d in dates]
    fit = fit_three_factor(y, X)
    return VolatilityRecord(doc_id, fit.rmse, fit.n_obs)


def _ascending(records: Sequence[VolatilityRecord]) -> list[VolatilityRecord]:
    return sorted(records, key=lambda r: (r.volatility, r.doc_id))


def assign_quintile_labels(records: Sequence[VolatilityRecord]) -> list[RiskLabel]:
    n = len(records)
    if n < 5:
        raise ConfigurationError(f"quintile labeling needs >= 5 records, got {n}")
    labels = []
    for rank, rec in enumerate(_ascending(records), 1):
        b = -(-5 * rank // n)
        label = Label.RISKY if b == 5 else Label.NON_RISKY if b == 1 else Label.EXCLUDED
        labels.append(RiskLabel(rec.doc_id, label, b))
    return labels


def assign_median_labels(records: Sequence[VolatilityRecord]) -> list[RiskLabel]:
    n = len(records)
    if n < 2:
        raise ConfigurationError(f"median labeling needs >= 2 records, got {n}")
    half = n // 2
    return [RiskLabel(rec.doc_id, Label.NON_RISKY, 1) if rank <= half
            else RiskLabel(rec.doc_id, Label.RISKY, 5)
            for rank, rec in enumerate(_ascending(records), 1)]


def label_by_year(records: Iterable[VolatilityRecord], year_of: Mapping[str, int],
                  mode: str = "quintile") -> list[RiskLabel]:
    """Bin each year's records separately."""
    assign = {"quintile": assign_quintile_labels, "median": assign_median_labels}.get(mode)
    if assign is None:
        raise ConfigurationError(f"unknown labeling mode {mode!r}", key="labeling")
    by_year: dict[int, list[VolatilityRecord]] = {}
    for rec in records:
        by_year.setdefault(year_of[rec.doc_id], []).append(rec)
    out = []
    for year in sorted(by_year):
        out.extend(assign(by_year[year]))
    return out


@dataclass(frozen=True)
class LabeledDoc:
    doc_id: str
    year: int
    label: Label


def build_year_splits(corpus: Iterable[LabeledDoc], test_year: int,
                      n_train_years: int = TRAINING_YEARS) -> DatasetSplit:
    docs = list(corpus)
    years = {d.year for d in docs}
    needed = range(test_year - n_train_years, test_year + 1)
    missing = [y for y in needed if y not in years]
    if missing:
        raise ConfigurationError(f"corpus lacks years {missing} for test year {test_year}",
                                 key="test_year")
    train = tuple(d.doc_id for d in docs
                  if test_year - n_train_years <= d.year < test_year and d.label != Label.EXCLUDED)
    test = tuple(d.doc_id for d in docs if d.year == test_year and d.label != Label.EXCLUDED)
    return DatasetSplit(test_year, train, test)


def _parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise InputError(f"bad date {text!r}") from exc


def read_returns(path) -> dict[str, dict[dt.date, float]]:
    """``company_id,date,return`` CSV into per-company date->return maps."""
    out: dict[str, dict[dt.date, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            value = float(row["return"])
            if not math.isfinite(value):
                raise InputError(f"non-finite return for {row['company_id']} on {row['date']}")
            series = out.setdefault(row["company_id"], {})
            date = _parse_date(row["date"])
            if date in series:
                raise InputError(f"duplicate return date {date} for {row['company_id']}")
            series[date] = value
    return out


def read_factors(path) -> dict[dt.date, FactorRow]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            date = _parse_date(row["date"])
            if date in out:
                raise InputError(f"duplicate factor date {date}")
            vals = FactorRow(float(row["mkt_excess"]), float(row["smb"]),
                             float(row["hml"]), float(row["rf"]))
            if not all(math.isfinite(v) for v in (vals.mkt_excess, vals.smb, vals.hml, vals.rf)):
                raise InputError(f"non-finite factor row on {date}")
            out[date] = vals
    return out


def read_calendar(path) -> list[dt.date]:
    with open(path, encoding="utf-8") as fh:
        dates = [_parse_date(line) for line in fh if line.strip()]
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise InputError("trading calendar must be strictly increasing")
    return dates


def write_labels(path, records: Sequence[VolatilityRecord], labels: Sequence[RiskLabel]) -> None:
    by_id = {r.doc_id: r for r in records}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["doc_id", "volatility", "n_obs", "bin", "label"])
        for lab in labels:
            rec = by_id[lab.doc_id]
            w.writerow([lab.doc_id, repr(rec.volatility), rec.n_obs, lab.bin, lab.label.value])


def read_labels(path) -> dict[str, RiskLabel]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                out[row["doc_id"]] = RiskLabel(row["doc_id"], Label(row["label"]), int(row["bin"]))
            except (KeyError, ValueError) as exc:
                raise InputError(f"malformed label row {row}: {exc}") from exc
    return out
