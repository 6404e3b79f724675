"""Word-, sentence- and corpus-level explanations built from forward traces.

Summed word attention averages 1 over a sentence's valid tokens and sentence
weights average 1/n over its n real sentences, so the default cutoffs (1.1 and
0.025) keep above-average words inside above-average sentences of documents
with roughly 40 or fewer sentences.
"""
from __future__ import annotations

import html
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import plotting
from .corpus import SPECIAL_TOKENS, detokenize
from .labeling import Label
from .model import ForwardTrace

WORD_CUTOFF = 1.1
SENTENCE_CUTOFF = 0.025
N_BUCKETS = 5


@dataclass
class WordExplanation:
    doc_id: str
    sentences: list[list[tuple[str, float, int]]]


@dataclass
class SentenceExplanation:
    doc_id: str
    ranked: list[tuple[int, float, str]]
    indices: list[int] = field(default_factory=list)


@dataclass
class CorpusCloud:
    test_year: int | None
    cls: Label
    word_cutoff: float
    sentence_cutoff: float
    counts: dict[str, int]

    def to_json(self) -> dict:
        return {"year": self.test_year, "class": self.cls.value, "word_cutoff": self.word_cutoff,
                "sentence_cutoff": self.sentence_cutoff, "counts": self.counts}


def _require_tokens(trace: ForwardTrace):
    if trace.tokens is None:
        raise ValueError(f"trace {trace.doc_id} carries no token strings; pass a vocabulary")
    return trace.tokens


def _content_positions(trace: ForwardTrace, s: int):
    tokens = _require_tokens(trace)[s]
    mask = trace.attention_mask[s]
    return [j for j, tok in enumerate(tokens) if mask[j] and tok not in SPECIAL_TOKENS]


def highlight_buckets(values) -> list[int]:
    """Quantile bucket 0..4 from the share of peers with strictly lower value."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if n <= 1:
        return [0] * n
    below = (v[None, :] < v[:, None]).sum(axis=1)
    return [min(N_BUCKETS - 1, int(N_BUCKETS * b / (n - 1))) for b in below]


def word_level_explanation(trace: ForwardTrace) -> WordExplanation:
    tokens = _require_tokens(trace)
    sentences = []
    for s in range(trace.n_sentences):
        pos = _content_positions(trace, s)
        values = [float(trace.summed_attention[s, j]) for j in pos]
        buckets = highlight_buckets(values)
        sentences.append([(tokens[s][j], val, b) for j, val, b in zip(pos, values, buckets)])
    return WordExplanation(trace.doc_id, sentences)


def sentence_text(trace: ForwardTrace, s: int) -> str:
    if s < len(trace.texts):
        return trace.texts[s]
    tokens = _require_tokens(trace)[s]
    return detokenize([tokens[j] for j in _content_positions(trace, s)])


def sentence_level_explanation(trace: ForwardTrace, top_k: int = 5) -> SentenceExplanation:
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    n = trace.n_sentences
    order = sorted(range(n), key=lambda s: (-trace.sentence_alphas[s], s))[:top_k]
    ranked = [(rank, float(trace.sentence_alphas[s]), sentence_text(trace, s))
              for rank, s in enumerate(order, 1)]
    return SentenceExplanation(trace.doc_id, ranked, order)


def _ordered(counts: Counter) -> dict[str, int]:
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def build_filtered_word_cloud(traces: Iterable[ForwardTrace], cls: Label, test_year=None,
                              word_cutoff: float = WORD_CUTOFF,
                              sentence_cutoff: float = SENTENCE_CUTOFF,
                              stoplist: Iterable[str] = ()) -> CorpusCloud:
    """Count tokens with attention >= ``word_cutoff`` inside sentences with
    weight >= ``sentence_cutoff``, over documents predicted as ``cls``."""
    cls = Label(cls)
    stop = set(stoplist)
    counts: Counter = Counter()
    for trace in traces:
        if trace.label != cls:
            continue
        tokens = _require_tokens(trace)
        for s in range(trace.n_sentences):
            if trace.sentence_alphas[s] < sentence_cutoff:
                continue
            for j in _content_positions(trace, s):
                if trace.summed_attention[s, j] >= word_cutoff and tokens[s][j] not in stop:
                    counts[tokens[s][j]] += 1
    return CorpusCloud(test_year, cls, word_cutoff, sentence_cutoff, _ordered(counts))


def explanation_record(trace: ForwardTrace) -> dict:
    words = word_level_explanation(trace)
    return {
        "doc_id": trace.doc_id,
        "prediction": trace.label.value,
        "probability": trace.probability,
        "sentences": [
            {"index": s, "alpha": float(trace.sentence_alphas[s]), "text": sentence_text(trace, s),
             "tokens": [{"t": t, "attn": a, "bucket": b} for t, a, b in words.sentences[s]]}
            for s in range(trace.n_sentences)
        ],
    }


_BUCKET_ALPHA = (0.0, 0.15, 0.35, 0.6, 0.9)

_STYLE = """
body{font-family:Georgia,serif;max-width:60em;margin:2em auto;color:#222}
.tok{padding:0 2px;border-radius:2px}
table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #ccc;padding:4px 8px;text-align:left}
.cloud span{display:inline-block;margin:2px 6px}
.doc{border-top:1px solid #999;margin-top:2em}
.risky{color:#c0392b}.nonrisky{color:#2471a3}
"""


def _token_spans(record: dict) -> str:
    parts = []
    for sent in record["sentences"]:
        spans = "".join(
            f'<span class="tok" data-bucket="{tok["bucket"]}" title="{tok["attn"]:.4f}" '
            f'style="background:rgba(192,57,43,{_BUCKET_ALPHA[tok["bucket"]]})">'
            f'{html.escape(tok["t"])}</span> '
            for tok in sent["tokens"])
        parts.append(f"<p>{spans}</p>")
    return "\n".join(parts)


def _cloud_html(cloud: CorpusCloud, top: int = 100) -> str:
    items = list(cloud.counts.items())[:top]
    head = (f"<h3>{html.escape(cloud.cls.value)} word cloud ({cloud.test_year}): word attention "
            f"&ge; {cloud.word_cutoff:g}, sentence attention &ge; {cloud.sentence_cutoff:g}</h3>")
    if not items:
        return head + "<p><em>no words passed the filters</em></p>"
    spans = "".join(
        f'<span style="font-size:{10 + 6 * math.log1p(c):.1f}px" title="{c}">{html.escape(w)}</span>'
        for w, c in items)
    return head + f'<div class="cloud">{spans}</div>'


def render_html(records: Sequence[dict], clouds: Sequence[CorpusCloud], top_k: int = 5) -> str:
    body = ["<h1>Risk classification explanations</h1>"]
    for cloud in clouds:
        body.append(_cloud_html(cloud))
    for rec in records:
        css = "risky" if rec["prediction"] == Label.RISKY.value else "nonrisky"
        body.append(f'<div class="doc"><h2>{html.escape(rec["doc_id"])} '
                    f'<span class="{css}">{html.escape(rec["prediction"])}</span> '
                    f'(p = {rec["probability"]:.4f})</h2>')
        ranked = sorted(rec["sentences"], key=lambda s: (-s["alpha"], s["index"]))[:top_k]
        rows = "".join(f"<tr><td>{i}</td><td>{s['alpha']:.5f}</td><td>{html.escape(s['text'])}</td></tr>"
                       for i, s in enumerate(ranked, 1))
        body.append(f"<table><tr><th>Rank</th><th>Attention</th><th>Sentence</th></tr>{rows}</table>")
        body.append(_token_spans(rec))
        body.append("</div>")
    return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>xrisk report</title>"
            f"<style>{_STYLE}</style></head><body>\n" + "\n".join(body) + "\n</body></html>\n")


def write_cloud(cloud: CorpusCloud, out_dir) -> Path:
    path = Path(out_dir) / f"cloud_{cloud.test_year}_{cloud.cls.value}.json"
    path.write_text(json.dumps(cloud.to_json(), indent=2) + "\n", encoding="utf-8")
    return path


def render_report(out_dir, traces: Sequence[ForwardTrace], clouds: Sequence[CorpusCloud] = (),
                  top_k: int = 5, max_doc_figures: int = 5,
                  sentence_cutoff: float = SENTENCE_CUTOFF) -> list[Path]:
    """Write ``explain.json``, ``report.html``, cloud JSON files and PNG figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = [explanation_record(t) for t in traces]
    written = []
    path = out / "explain.json"
    path.write_text(json.dumps(records, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    written.append(path)
    path = out / "report.html"
    path.write_text(render_html(records, clouds, top_k), encoding="utf-8")
    written.append(path)
    for cloud in clouds:
        written.append(write_cloud(cloud, out))
        color = plotting.RISKY_COLOR if cloud.cls == Label.RISKY else plotting.NONRISKY_COLOR
        written.append(plotting.cloud_bars(
            cloud.counts, f"{cloud.cls.value} words ({cloud.test_year})",
            out / f"cloud_{cloud.test_year}_{cloud.cls.value}.png", color=color))
    for trace in traces[:max_doc_figures]:
        written.append(plotting.sentence_alpha_bars(
            trace.sentence_alphas[: trace.n_sentences],
            f"{trace.doc_id}: {trace.label.value} (p={trace.probability:.3f})",
            out / f"sentences_{trace.doc_id}.png", cutoff=sentence_cutoff))
    return written
