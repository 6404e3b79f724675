"""Filing ingestion: sentence splitting, vocabulary, WordPiece and fixed-shape encoding."""
from __future__ import annotations

import datetime as dt
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)

MAX_SENTENCE_TOKENS = 64
MAX_SENTENCES = 50

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


@dataclass(frozen=True)
class RawFiling:
    doc_id: str
    company_id: str
    filing_date: dt.date
    year: int
    text: str

    def __post_init__(self):
        if self.filing_date.year != self.year:
            raise InputError(
                f"{self.doc_id}: filing_date {self.filing_date} is not in year {self.year}")

    def to_json(self) -> dict:
        return {"doc_id": self.doc_id, "company_id": self.company_id,
                "filing_date": self.filing_date.isoformat(), "year": self.year,
                "text": self.text}

    @classmethod
    def from_json(cls, obj: dict) -> "RawFiling":
        try:
            return cls(doc_id=str(obj["doc_id"]), company_id=str(obj["company_id"]),
                       filing_date=dt.date.fromisoformat(obj["filing_date"]),
                       year=int(obj["year"]), text=obj.get("text") or "")
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"malformed filing record: {exc}") from exc


def read_corpus(path) -> list[RawFiling]:
    filings = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            filing = RawFiling.from_json(obj)
            if filing.doc_id in seen:
                raise InputError(f"{path}:{lineno}: duplicate doc_id {filing.doc_id!r}")
            seen.add(filing.doc_id)
            filings.append(filing)
    return filings


def write_corpus(filings: Iterable[RawFiling], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for filing in filings:
            fh.write(json.dumps(filing.to_json(), ensure_ascii=False) + "\n")


def split_sentences(text: str) -> list[str]:
    """Split on ``.``, ``!`` or ``?`` followed by whitespace or end of text.

    Sentences keep their terminator, are stripped and lowercased; empty pieces
    are dropped.
    """
    pieces = (p.strip() for p in _SENTENCE_BOUNDARY.split(text))
    return [p.lower() for p in pieces if p]


@dataclass
class Vocabulary:
    tokens: list[str]
    id_of: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id_of:
            self.id_of = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.id_of) != len(self.tokens):
            raise InputError("vocabulary contains duplicate tokens")
        missing = [s for s in SPECIAL_TOKENS if s not in self.id_of]
        if missing:
            raise InputError(f"vocabulary lacks special tokens {missing}")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.id_of

    @property
    def pad_id(self) -> int:
        return self.id_of[PAD]

    @property
    def unk_id(self) -> int:
        return self.id_of[UNK]

    @property
    def cls_id(self) -> int:
        return self.id_of[CLS]

    @property
    def sep_id(self) -> int:
        return self.id_of[SEP]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self.id_of[s] for s in SPECIAL_TOKENS)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocabulary(sentences: Iterable[str], max_size: int) -> Vocabulary:
    """Specials first, then whole words by descending count (ties lexicographic)."""
    if max_size < len(SPECIAL_TOKENS):
        raise ConfigurationError(
            f"max_size must be >= {len(SPECIAL_TOKENS)}, got {max_size}", key="vocab_size")
    counts = Counter()
    for sentence in sentences:
        counts.update(sentence.split())
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    words = [w for w, _ in ranked[: max_size - len(SPECIAL_TOKENS)]]
    return Vocabulary(list(SPECIAL_TOKENS) + words)


def wordpiece_tokenize(sentence: str, vocab: Vocabulary, max_chars_per_word: int = 100) -> list[str]:
    out = []
    for word in sentence.split():
        if len(word) > max_chars_per_word:
            out.append(UNK)
            continue
        pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            piece = None
            while start < end:
                candidate = word[start:end]
                if start > 0:
                    candidate = "##" + candidate
                if candidate in vocab:
                    piece = candidate
                    break
                end -= 1
            if piece is None:
                pieces = None
                break
            pieces.append(piece)
            start = end
        out.extend(pieces if pieces is not None else [UNK])
    return out


@dataclass(frozen=True)
class TokenizedSentence:
    token_ids: np.ndarray
    attention_mask: np.ndarray

    @property
    def n_real(self) -> int:
        return int(self.attention_mask.sum())


def encode_sentence(sentence: str, vocab: Vocabulary, T: int = MAX_SENTENCE_TOKENS) -> TokenizedSentence:
    if T < 2:
        raise ConfigurationError(f"T must be >= 2, got {T}", key="T")
    body = [vocab.id_of[t] for t in wordpiece_tokenize(sentence, vocab)][: T - 2]
    ids = np.full(T, vocab.pad_id, dtype=np.int64)
    ids[0] = vocab.cls_id
    ids[1:1 + len(body)] = body
    ids[1 + len(body)] = vocab.sep_id
    mask = np.zeros(T, dtype=np.int64)
    mask[: len(body) + 2] = 1
    return TokenizedSentence(ids, mask)


@dataclass(frozen=True)
class EncodedDocument:
    """One filing as fixed (L, T) token-id and mask matrices.

    ``texts`` holds the kept sentence strings (length ``n_sentences``).
    """

    doc_id: str
    token_ids: np.ndarray
    attention_mask: np.ndarray
    sentence_mask: np.ndarray
    texts: tuple[str, ...] = ()

    @property
    def n_sentences(self) -> int:
        return int(self.sentence_mask.sum())

    @property
    def shape(self) -> tuple[int, int]:
        return self.token_ids.shape

    @property
    def sentences(self) -> list[TokenizedSentence]:
        return [TokenizedSentence(i, m) for i, m in zip(self.token_ids, self.attention_mask)]

    def to_json(self) -> dict:
        return {"doc_id": self.doc_id, "token_ids": self.token_ids.tolist(),
                "attention_mask": self.attention_mask.tolist(),
                "sentence_mask": self.sentence_mask.tolist(), "texts": list(self.texts)}

    @classmethod
    def from_json(cls, obj: dict) -> "EncodedDocument":
        return cls(obj["doc_id"], np.asarray(obj["token_ids"], dtype=np.int64),
                   np.asarray(obj["attention_mask"], dtype=np.int64),
                   np.asarray(obj["sentence_mask"], dtype=np.int64), tuple(obj.get("texts", ())))


def encode_document(filing: RawFiling, vocab: Vocabulary, T: int = MAX_SENTENCE_TOKENS,
                    L: int = MAX_SENTENCES) -> EncodedDocument:
    if L < 1:
        raise ConfigurationError(f"L must be >= 1, got {L}", key="L")
    sentences = split_sentences(filing.text)[:L]
    rows = [encode_sentence(s, vocab, T) for s in sentences]
    empty = encode_sentence("", vocab, T)
    rows += [empty] * (L - len(rows))
    sentence_mask = np.zeros(L, dtype=np.int64)
    sentence_mask[: len(sentences)] = 1
    return EncodedDocument(
        doc_id=filing.doc_id,
        token_ids=np.stack([r.token_ids for r in rows]),
        attention_mask=np.stack([r.attention_mask for r in rows]),
        sentence_mask=sentence_mask,
        texts=tuple(sentences),
    )


def encode_corpus(filings: Sequence[RawFiling], vocab: Vocabulary, T: int = MAX_SENTENCE_TOKENS,
                  L: int = MAX_SENTENCES) -> list[EncodedDocument]:
    return [encode_document(f, vocab, T, L) for f in filings]


def write_encoded(docs: Iterable[EncodedDocument], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json()) + "\n")


def read_encoded(path) -> list[EncodedDocument]:
    with open(path, encoding="utf-8") as fh:
        return [EncodedDocument.from_json(json.loads(line)) for line in fh if line.strip()]


def detokenize(tokens: Sequence[str]) -> str:
    words: list[str] = []
    for tok in tokens:
        if tok.startswith("##") and words:
            words[-1] += tok[2:]
        else:
            words.append(tok)
    return " ".join(words)
