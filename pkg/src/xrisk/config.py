"""Run configuration: sectioned ``key = value`` file plus flag overrides.

Example::

    [encoder]
    d_model = 32
    n_layers = 2

    [experiment]
    test_year = 2008
    repetitions = 3
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, SpecError
from .explain import SENTENCE_CUTOFF, WORD_CUTOFF
from .model import ModelConfig
from .synthetic import SyntheticSpec
from .train import TrainingConfig

OUT_ENV = "XRISK_OUT"
DEFAULT_OUT = "xrisk_out"


@dataclass
class Paths:
    corpus: str | None = None
    returns: str | None = None
    factors: str | None = None
    calendar: str | None = None
    vocab: str | None = None
    labels: str | None = None
    checkpoint: str | None = None
    out: str | None = None


@dataclass
class ExplainConfig:
    word_cutoff: float = WORD_CUTOFF
    sentence_cutoff: float = SENTENCE_CUTOFF
    top_k: int = 5
    max_docs: int = 50
    stoplist: tuple[str, ...] = ()


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)
    test_year: int | None = None
    repetitions: int = 10
    labeling: str = "quintile"
    seed: int = 0
    threads: int = 1
    vocab_max_size: int = 30522
    val_fraction: float = 0.1

    @property
    def out_dir(self) -> Path:
        return Path(self.paths.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(v)


def _str(v: str) -> str:
    return v


def _pair(v: str) -> tuple[int, int]:
    lo, hi = (int(x) for x in v.split(","))
    return lo, hi


def _words(v: str) -> tuple[str, ...]:
    return tuple(w.strip() for w in v.split(",") if w.strip())


# section -> key -> (parser, owning object path, attribute)
_SCHEMA = {
    "paths": {k: (_str, "paths", k) for k in (f.name for f in dataclasses.fields(Paths))},
    "encoder": {
        "d_model": (_int, "model.encoder", "d_model"), "n_layers": (_int, "model.encoder", "n_layers"),
        "n_heads": (_int, "model.encoder", "n_heads"), "d_ff": (_int, "model.encoder", "d_ff"),
        "T": (_int, "model.encoder", "T"), "dropout": (_float, "model.encoder", "dropout"),
        "attention_layer": (_int, "model.encoder", "attention_layer"),
    },
    "model": {"L": (_int, "model", "L"), "a": (_int, "model", "a"),
              "vocab_max_size": (_int, "", "vocab_max_size")},
    "training": {
        **{k: (_float, "training", k) for k in
           ("lr_encoder", "lr_head", "beta1", "beta2", "eps", "pos_weight")},
        **{k: (_int, "training", k) for k in ("batch_size", "max_epochs", "patience")},
        "val_fraction": (_float, "", "val_fraction"),
    },
    "explain": {"word_cutoff": (_float, "explain", "word_cutoff"),
                "sentence_cutoff": (_float, "explain", "sentence_cutoff"),
                "top_k": (_int, "explain", "top_k"), "max_docs": (_int, "explain", "max_docs"),
                "stoplist": (_words, "explain", "stoplist")},
    "experiment": {"test_year": (_int, "", "test_year"), "repetitions": (_int, "", "repetitions"),
                   "labeling": (_str, "", "labeling"), "seed": (_int, "", "seed"),
                   "threads": (_int, "", "threads")},
    "synth": {
        **{k: (_int, "synth", k) for k in
           ("n_docs", "vocab_size", "n_hazard", "hazard_per_sentence", "start_year", "n_years")},
        **{k: (_float, "synth", k) for k in ("hazard_rate", "risky_fraction")},
        "sentences_per_doc": (_pair, "synth", "sentences_per_doc"),
        "tokens_per_sentence": (_pair, "synth", "tokens_per_sentence"),
    },
}

# flag dest -> (section, key)
FLAG_KEYS = {
    "test_year": ("experiment", "test_year"),
    "repetitions": ("experiment", "repetitions"),
    "threads": ("experiment", "threads"),
    "word_cutoff": ("explain", "word_cutoff"),
    "sentence_cutoff": ("explain", "sentence_cutoff"),
    "labeling": ("experiment", "labeling"),
    "out": ("paths", "out"),
    "seed": ("experiment", "seed"),
}


def _owner(cfg: RunConfig, dotted: str):
    obj = cfg
    for part in filter(None, dotted.split(".")):
        obj = getattr(obj, part)
    return obj


def _set(cfg: RunConfig, section: str, key: str, raw: str) -> RunConfig:
    spec = _SCHEMA.get(section, {}).get(key)
    if spec is None:
        raise ConfigurationError(f"unknown configuration key {section}.{key}", key=key)
    parse, owner_path, attr = spec
    try:
        value = parse(raw.strip()) if isinstance(raw, str) else raw
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r} ({exc})", key=key) from exc
    owner = _owner(cfg, owner_path)
    if owner_path == "synth":
        cfg.synth = dataclasses.replace(cfg.synth, **{attr: value})
    else:
        setattr(owner, attr, value)
    return cfg


def validate(cfg: RunConfig) -> RunConfig:
    cfg.model.validate()
    cfg.training.validate()
    try:
        cfg.synth.validate()
    except SpecError as exc:
        raise ConfigurationError(f"synth: {exc}", key="synth") from exc
    checks = [
        ("word_cutoff", cfg.explain.word_cutoff >= 0),
        ("sentence_cutoff", 0 <= cfg.explain.sentence_cutoff <= 1),
        ("top_k", cfg.explain.top_k >= 1),
        ("max_docs", cfg.explain.max_docs >= 0),
        ("repetitions", cfg.repetitions >= 1),
        ("labeling", cfg.labeling in ("quintile", "median")),
        ("threads", cfg.threads >= 1),
        ("seed", cfg.seed >= 0),
        ("vocab_max_size", cfg.vocab_max_size >= 4),
        ("val_fraction", 0 < cfg.val_fraction < 1),
    ]
    for key, ok in checks:
        if not ok:
            raise ConfigurationError(f"invalid value for {key}", key=key)
    return cfg


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (optional), apply ``overrides`` ({flag dest: value}) and validate."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}", key="config") from exc
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigurationError(f"unknown configuration section [{section}]", key=section)
            for key, raw in parser.items(section):
                _set(cfg, section, key, raw)
    for dest, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = FLAG_KEYS[dest]
        _set(cfg, section, key, value)
    return validate(cfg)
