import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xrisk.errors import ConfigurationError, InputError, SingularFitError
from xrisk.labeling import (FactorRow, Label, LabeledDoc, VolatilityRecord, assign_median_labels,
                            assign_quintile_labels, build_year_splits, event_window,
                            fit_three_factor, label_by_year, post_event_volatility,
                            read_calendar, read_factors, read_labels, read_returns, write_labels)

from oracles import simulate_three_factor
from published_counts import YEAR_COUNTS, SPLIT_SIZES, counts_corpus


def test_noiseless_fit_recovers_coefficients():
    rng = np.random.default_rng(1)
    X = rng.normal(0, 0.01, (246, 3))
    y = 0.001 + X @ np.array([1.2, 0.3, -0.1])
    fit = fit_three_factor(y, X)
    assert fit.rmse <= 1e-12
    assert abs(fit.alpha - 0.001) <= 1e-10
    assert np.allclose(fit.betas, (1.2, 0.3, -0.1), atol=1e-10, rtol=0)
    assert fit.n_obs == 246


def test_zero_factors_constant_return():
    fit = fit_three_factor(np.full(30, 0.0042), np.zeros((30, 3)))
    assert fit.alpha == pytest.approx(0.0042, abs=1e-15)
    assert fit.rmse == pytest.approx(0.0, abs=1e-15)
    assert fit.betas == (0.0, 0.0, 0.0)


def test_monte_carlo_rmse_near_sigma():
    rmses = [fit_three_factor(*simulate_three_factor(seed, betas=(1.2, 0.3, -0.1),
                                                      alpha=0.001)).rmse
             for seed in range(100)]
    assert abs(np.median(rmses) - 0.02) <= 0.1 * 0.02


def test_collinear_factors_are_singular():
    rng = np.random.default_rng(0)
    m = rng.normal(size=20)
    with pytest.raises(SingularFitError):
        fit_three_factor(rng.normal(size=20), np.column_stack([m, 2 * m, rng.normal(size=20)]))


def test_fit_input_errors():
    with pytest.raises(InputError):
        fit_three_factor(np.zeros(10), np.zeros((9, 3)))
    with pytest.raises(InputError):
        fit_three_factor(np.zeros(4), np.ones((4, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_residuals_orthogonal_to_regressors(seed):
    y, X = simulate_three_factor(seed, n=80)
    fit = fit_three_factor(y, X)
    design = np.column_stack([np.ones(len(y)), X])
    scale = np.abs(design).max(axis=0) * np.abs(fit.residuals).max()
    assert (np.abs(fit.residuals @ design) <= 1e-8 * len(y) * scale).all()
    assert fit.rmse == pytest.approx(math.sqrt(np.mean(fit.residuals ** 2)), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_rmse_invariant_to_order(seed, random):
    y, X = simulate_three_factor(seed, n=70)
    perm = list(range(len(y)))
    random.shuffle(perm)
    assert fit_three_factor(y[perm], X[perm]).rmse == pytest.approx(fit_three_factor(y, X).rmse,
                                                                     rel=1e-10)


def _calendar(n=400, start=dt.date(2006, 1, 2)):
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def _market(calendar, seed=0, skip=()):
    rng = np.random.default_rng(seed)
    factors = {d: FactorRow(*rng.normal(0, 0.01, 3), 0.0001) for d in calendar}
    returns = {d: 0.0002 + 0.9 * f.mkt_excess + f.rf + rng.normal(0, 0.015)
               for d, f in factors.items() if d not in skip}
    return returns, factors


def test_event_window_offsets():
    cal = _calendar()
    w = event_window(cal[10], cal)
    assert w[0] == cal[16] and w[-1] == cal[262] and len(w) == 247
    # a non-trading filing day counts from the previous trading day
    saturday = cal[10] + dt.timedelta(days=(5 - cal[10].weekday()) % 7)
    assert event_window(saturday, cal)[0] == cal[cal.index(max(d for d in cal if d <= saturday)) + 6]


def test_full_window_has_247_observations():
    cal = _calendar()
    returns, factors = _market(cal)
    rec = post_event_volatility("d", cal[5], returns, factors, cal)
    assert rec.n_obs == 247 and rec.volatility > 0


def test_fifty_nine_observations_is_insufficient():
    cal = _calendar(70)
    returns, factors = _market(cal)
    window = event_window(cal[0], cal)
    assert len(window) == 64
    missing = set(window[:5])
    returns = {d: r for d, r in returns.items() if d not in missing}
    assert post_event_volatility("d", cal[0], returns, factors, cal) is None
    returns[window[0]] = 0.0
    assert post_event_volatility("d", cal[0], returns, factors, cal).n_obs == 60


def test_filing_on_last_calendar_date():
    cal = _calendar(100)
    returns, factors = _market(cal)
    assert post_event_volatility("d", cal[-1], returns, factors, cal) is None


def _records(values):
    return [VolatilityRecord(f"d{i:02d}", v, 100) for i, v in enumerate(values)]


def test_quintiles_even_split():
    labels = assign_quintile_labels(_records(np.linspace(0.01, 0.1, 10)))
    assert sorted(l.bin for l in labels) == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    assert sum(l.label == Label.RISKY for l in labels) == 2
    assert sum(l.label == Label.NON_RISKY for l in labels) == 2


def test_quintiles_five_records():
    labels = assign_quintile_labels(_records([1, 2, 3, 4, 5]))
    assert [l.bin for l in labels] == [1, 2, 3, 4, 5]
    assert [l.label for l in labels].count(Label.RISKY) == 1


def test_quintile_guard():
    with pytest.raises(ConfigurationError):
        assign_quintile_labels(_records([1, 2, 3, 4]))


def test_median_labels():
    four = assign_median_labels(_records([4, 3, 2, 1]))
    assert [l.label for l in four].count(Label.NON_RISKY) == 2
    five = assign_median_labels(_records([1, 2, 3, 4, 5]))
    assert [l.label for l in five] == [Label.NON_RISKY] * 2 + [Label.RISKY] * 3
    tied = assign_median_labels(_records([0.5] * 4))
    assert [(l.doc_id, l.label) for l in tied] == [
        ("d00", Label.NON_RISKY), ("d01", Label.NON_RISKY), ("d02", Label.RISKY), ("d03", Label.RISKY)]
    with pytest.raises(ConfigurationError):
        assign_median_labels(_records([1]))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(1e-4, 1.0), min_size=5, max_size=200), st.integers(-8, 8))
def test_quintile_properties(values, k):
    c = 2.0 ** k  # exact scaling, so floating rounding cannot reorder ties
    recs = _records(values)
    labels = assign_quintile_labels(recs)
    sizes = [sum(l.bin == b for l in labels) for b in range(1, 6)]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(l.doc_id for l in labels) == sorted(r.doc_id for r in recs)
    for l in labels:
        assert (l.label == Label.RISKY) == (l.bin == 5)
        assert (l.label == Label.NON_RISKY) == (l.bin == 1)
    scaled = assign_quintile_labels([VolatilityRecord(r.doc_id, r.volatility * c, r.n_obs)
                                     for r in recs])
    assert {l.doc_id: l.label for l in scaled} == {l.doc_id: l.label for l in labels}


def test_label_by_year_bins_each_year():
    recs = _records(list(range(10)))
    year_of = {r.doc_id: 2005 if i < 5 else 2006 for i, r in enumerate(recs)}
    labels = label_by_year(recs, year_of)
    assert sum(l.label == Label.RISKY for l in labels) == 2
    with pytest.raises(ConfigurationError):
        label_by_year(recs, year_of, mode="tercile")


@pytest.mark.parametrize("test_year", sorted(SPLIT_SIZES))
def test_splits_reproduce_published_counts(test_year):
    split = build_year_splits(counts_corpus(), test_year)
    assert (len(split.train_doc_ids), len(split.test_doc_ids)) == SPLIT_SIZES[test_year]


def test_table_counts_are_consistent():
    for year, (n_train, n_test) in SPLIT_SIZES.items():
        assert sum(sum(YEAR_COUNTS[y]) for y in range(year - 5, year)) == n_train
        assert sum(YEAR_COUNTS[year]) == n_test


def test_split_disjoint_and_exhaustive():
    corpus = counts_corpus()
    split = build_year_splits(corpus, 2010)
    train, test = set(split.train_doc_ids), set(split.test_doc_ids)
    assert not train & test
    expected = {d.doc_id for d in corpus if 2005 <= d.year <= 2010 and d.label != Label.EXCLUDED}
    assert train | test == expected


def test_toy_split_and_missing_year():
    toy = [LabeledDoc(f"c{y}", y, Label.RISKY) for y in range(2000, 2006)]
    split = build_year_splits(toy, 2005)
    assert len(split.train_doc_ids) == 5 and split.test_doc_ids == ("c2005",)
    with pytest.raises(ConfigurationError):
        build_year_splits(toy[1:], 2005)


def test_csv_readers_and_label_writer(tmp_path):
    (tmp_path / "r.csv").write_text("company_id,date,return\nA,2006-01-02,0.01\nA,2006-01-03,-0.02\n")
    (tmp_path / "f.csv").write_text("date,mkt_excess,smb,hml,rf\n2006-01-02,0.01,0.0,0.001,0.0001\n")
    (tmp_path / "cal.txt").write_text("2006-01-02\n2006-01-03\n")
    assert read_returns(tmp_path / "r.csv")["A"][dt.date(2006, 1, 3)] == -0.02
    assert read_factors(tmp_path / "f.csv")[dt.date(2006, 1, 2)].hml == 0.001
    assert len(read_calendar(tmp_path / "cal.txt")) == 2
    (tmp_path / "bad.txt").write_text("2006-01-03\n2006-01-02\n")
    with pytest.raises(InputError):
        read_calendar(tmp_path / "bad.txt")
    recs = _records([1, 2, 3, 4, 5])
    labels = assign_quintile_labels(recs)
    write_labels(tmp_path / "labels.csv", recs, labels)
    assert (tmp_path / "labels.csv").read_text().splitlines()[0] == "doc_id,volatility,n_obs,bin,label"
    assert read_labels(tmp_path / "labels.csv")["d04"].label == Label.RISKY
