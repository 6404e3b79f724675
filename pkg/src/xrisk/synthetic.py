"""Planted-signal corpus: risky filings carry hazard tokens, non-risky ones never do."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .corpus import RawFiling
from .errors import SpecError
from .labeling import Label, RiskLabel, VolatilityRecord, WINDOW_END, WINDOW_START


@dataclass(frozen=True)
class SyntheticSpec:
    n_docs: int = 1200
    vocab_size: int = 200
    n_hazard: int = 10
    hazard_rate: float = 0.3
    sentences_per_doc: tuple[int, int] = (3, 6)
    tokens_per_sentence: tuple[int, int] = (4, 9)
    hazard_per_sentence: int = 1
    risky_fraction: float = 0.5
    start_year: int = 2003
    n_years: int = 6
    seed: int = 0

    @property
    def hazard_tokens(self) -> list[str]:
        return [f"hazard{j:02d}" for j in range(self.n_hazard)]

    @property
    def background_tokens(self) -> list[str]:
        return [f"w{i:03d}" for i in range(self.vocab_size - self.n_hazard)]

    def validate(self) -> "SyntheticSpec":
        if not 0.0 <= self.hazard_rate <= 1.0 or not 0.0 <= self.risky_fraction <= 1.0:
            raise SpecError("rates must lie in [0, 1]")
        if self.n_hazard > self.vocab_size or self.n_docs < 0 or self.n_years < 1:
            raise SpecError("inconsistent corpus sizes")
        lo, hi = self.sentences_per_doc
        tlo, thi = self.tokens_per_sentence
        if not (1 <= lo <= hi and 1 <= tlo <= thi):
            raise SpecError("sentence/token ranges must be positive and ordered")
        if self.hazard_per_sentence > tlo:
            raise SpecError("hazard_per_sentence exceeds the shortest sentence")
        if self.risky_fraction > 0 and (self.n_hazard == 0 or self.hazard_rate == 0 or self.hazard_per_sentence < 1):
            raise SpecError("risky documents requested but no hazard tokens would be planted")
        return self


def generate_synthetic_corpus(spec: SyntheticSpec) -> tuple[list[RawFiling], list[RiskLabel]]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    background = spec.background_tokens
    hazards = spec.hazard_tokens
    filings, labels = [], []
    for i in range(spec.n_docs):
        risky = bool(rng.random() < spec.risky_fraction)
        n_sent = int(rng.integers(spec.sentences_per_doc[0], spec.sentences_per_doc[1] + 1))
        sentences = [list(rng.choice(background, size=int(rng.integers(
            spec.tokens_per_sentence[0], spec.tokens_per_sentence[1] + 1))))
            for _ in range(n_sent)]
        if risky:
            k = max(1, int(round(spec.hazard_rate * n_sent)))
            for s in rng.choice(n_sent, size=k, replace=False):
                slots = rng.choice(len(sentences[s]), size=spec.hazard_per_sentence, replace=False)
                for pos in slots:
                    sentences[s][pos] = hazards[int(rng.integers(len(hazards)))]
        year = spec.start_year + i % spec.n_years
        date = dt.date(year, 3, 1) + dt.timedelta(days=i % 28)
        doc_id = f"syn{spec.seed}-{i:05d}"
        text = " ".join(" ".join(words) + " ." for words in sentences)
        filings.append(RawFiling(doc_id, f"co{i:05d}", date, year, text))
        labels.append(RiskLabel(doc_id, Label.RISKY if risky else Label.NON_RISKY, 5 if risky else 1))
    return filings, labels


def synthetic_volatility(labels: list[RiskLabel], seed: int = 0) -> list[VolatilityRecord]:
    """Volatility values consistent with the planted labels (risky ones strictly higher)."""
    rng = np.random.default_rng(seed)
    n_obs = WINDOW_END - WINDOW_START + 1
    return [VolatilityRecord(lab.doc_id,
                             float(rng.uniform(0.03, 0.06) if lab.label == Label.RISKY
                                   else rng.uniform(0.005, 0.015)), n_obs)
            for lab in labels]
