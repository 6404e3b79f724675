"""Rolling-year protocol: split, train one model per seed, evaluate, average."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .baseline import tfidf_logreg_baseline
from .corpus import RawFiling, Vocabulary, build_vocabulary, encode_corpus, split_sentences
from .errors import ConfigurationError
from .labeling import DatasetSplit, LabeledDoc, Label, RiskLabel, build_year_splits
from .metrics import MetricReport, mean_report, metric_report
from .model import ModelConfig, RiskClassifier, predict
from .train import EpochRecord, TrainingConfig, targets_of, train

log = logging.getLogger(__name__)

# Published F1 / tau / rho per test year; report formatting fixtures only.
REFERENCE_RESULTS = {
    "hierarchical": {"f1": (0.65, 0.71, 0.74, 0.84, 0.81, 0.83),
                     "tau": (0.47, 0.52, 0.53, 0.56, 0.55, 0.54),
                     "rho": (0.58, 0.64, 0.65, 0.68, 0.67, 0.67)},
    "ranking": {"f1": (0.63, 0.40, 0.67, 0.72, 0.68, 0.74),
                "tau": (0.45, 0.35, 0.51, 0.53, 0.53, 0.52),
                "rho": (0.56, 0.44, 0.62, 0.64, 0.64, 0.63)},
    "tfidf_logreg": {"f1": (0.43, 0.48, 0.51, 0.55, 0.47, 0.44),
                     "tau": (0.44, 0.44, 0.47, 0.46, 0.44, 0.45),
                     "rho": (0.54, 0.54, 0.57, 0.56, 0.54, 0.55)},
}
TEST_YEARS = (2008, 2009, 2010, 2011, 2012, 2013)


@dataclass
class SplitData:
    split: DatasetSplit
    train: list[RawFiling]
    test: list[RawFiling]
    train_labels: list[Label]
    test_labels: list[Label]


def prepare_split(filings: Sequence[RawFiling], labels: Mapping[str, RiskLabel],
                  test_year: int) -> SplitData:
    labeled = [LabeledDoc(f.doc_id, f.year, labels[f.doc_id].label)
               for f in filings if f.doc_id in labels]
    split = build_year_splits(labeled, test_year)
    by_id = {f.doc_id: f for f in filings}
    train_f = [by_id[d] for d in split.train_doc_ids]
    test_f = [by_id[d] for d in split.test_doc_ids]
    if not train_f or not test_f:
        raise ConfigurationError(f"empty split for test year {test_year}", key="test_year")
    return SplitData(split, train_f, test_f, [labels[f.doc_id].label for f in train_f],
                     [labels[f.doc_id].label for f in test_f])


def corpus_vocabulary(filings: Sequence[RawFiling], max_size: int) -> Vocabulary:
    return build_vocabulary((s for f in filings for s in split_sentences(f.text)), max_size)


def validation_partition(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train, validation) index partition; validation gets at least one item."""
    if not 0 < fraction < 1 or n < 2:
        raise ConfigurationError("validation needs 0 < fraction < 1 and >= 2 training docs",
                                 key="val_fraction")
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(fraction * n)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def with_seed(model_config: ModelConfig, training_config: TrainingConfig, seed: int,
              vocab_size: int) -> tuple[ModelConfig, TrainingConfig]:
    enc = dataclasses.replace(model_config.encoder, vocab_size=vocab_size, seed=seed)
    return (dataclasses.replace(model_config, encoder=enc, seed=seed),
            dataclasses.replace(training_config, seed=seed))


def train_seed(data: SplitData, vocab: Vocabulary, model_config: ModelConfig,
               training_config: TrainingConfig, seed: int, val_fraction: float = 0.1
               ) -> tuple[RiskClassifier, list[EpochRecord], TrainingConfig]:
    mc, tc = with_seed(model_config, training_config, seed, len(vocab))
    docs = encode_corpus(data.train, vocab, mc.encoder.T, mc.L)
    y = targets_of(data.train_labels)
    tr, va = validation_partition(len(docs), val_fraction, seed)
    model, history = train([docs[i] for i in tr], y[tr], [docs[i] for i in va], y[va], mc, tc)
    return model, history, tc


def evaluate_model(model: RiskClassifier, data: SplitData, vocab: Vocabulary, seed) -> MetricReport:
    cfg = model.config
    docs = encode_corpus(data.test, vocab, cfg.encoder.T, cfg.L)
    traces = predict(model, docs)
    y = targets_of(data.test_labels)
    return metric_report([t.probability for t in traces], [t.label == Label.RISKY for t in traces],
                         y == 1, data.split.test_year, seed)


@dataclass
class ExperimentResult:
    per_seed: list[MetricReport]
    mean: MetricReport
    baseline: MetricReport | None = None
    histories: dict = dataclasses.field(default_factory=dict)


def run_rolling_experiment(filings: Sequence[RawFiling], labels: Mapping[str, RiskLabel],
                           test_year: int, model_config: ModelConfig,
                           training_config: TrainingConfig, repetitions: int = 10,
                           vocab: Vocabulary | None = None, vocab_max_size: int = 30522,
                           val_fraction: float = 0.1, with_baseline: bool = True,
                           first_seed: int = 0) -> ExperimentResult:
    """Train seeds ``first_seed .. first_seed + repetitions - 1`` on the five
    preceding years and evaluate each on ``test_year``."""
    if repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1", key="repetitions")
    data = prepare_split(filings, labels, test_year)
    vocab = vocab or corpus_vocabulary(data.train, vocab_max_size)
    reports, histories = [], {}
    for seed in range(first_seed, first_seed + repetitions):
        model, history, _ = train_seed(data, vocab, model_config, training_config, seed, val_fraction)
        reports.append(evaluate_model(model, data, vocab, seed))
        histories[seed] = history
        log.info("seed %d: f1 %.4f", seed, reports[-1].f1_risky)
    baseline = None
    if with_baseline:
        baseline = tfidf_logreg_baseline(
            [f.text for f in data.train], targets_of(data.train_labels),
            [f.text for f in data.test], targets_of(data.test_labels), test_year)
    return ExperimentResult(reports, mean_report(reports), baseline, histories)


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_metrics_csv(path, reports: Sequence[MetricReport], mean: MetricReport | None = None) -> None:
    rows = list(reports) + ([mean] if mean is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MetricReport.FIELDS)
        for rep in rows:
            row = rep.as_row()
            w.writerow([_fmt(row[k]) for k in MetricReport.FIELDS])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
