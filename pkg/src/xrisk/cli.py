"""``xrisk`` command line: ingest, label, split, train, eval, explain, cloud, synth.

Exit status is 0 on success, 1 on a domain error and 2 on a configuration error.
Every successful run writes ``run_manifest.json`` into the output directory.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__, plotting
from .baseline import tfidf_logreg_baseline
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, parse_config
from .corpus import Vocabulary, encode_corpus, read_corpus, write_corpus, write_encoded
from .errors import ConfigurationError, XRiskError
from .experiment import (corpus_vocabulary, evaluate_model, prepare_split, train_seed,
                         write_metrics_csv)
from .explain import build_filtered_word_cloud, render_report, write_cloud
from .labeling import (Label, label_by_year, post_event_volatility, read_calendar, read_factors,
                       read_labels, read_returns, write_labels)
from .metrics import mean_report
from .model import predict
from .synthetic import generate_synthetic_corpus, synthetic_volatility
from .train import targets_of, write_history

log = logging.getLogger("xrisk")

COMMANDS = ("ingest", "label", "split", "train", "eval", "explain", "cloud", "synth")
# timing columns make these differ between otherwise identical runs
_UNHASHED_PREFIXES = ("history_",)


class Run:
    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = cfg.out_dir
        self.inputs: dict[str, Path] = {}
        self.outputs: list[Path] = []
        self.seeds: list[int] = [cfg.seed]

    def input(self, path, key: str) -> Path:
        if path is None or not Path(path).exists():
            raise ConfigurationError(f"{self.command}: missing input {key} ({path})", key=key)
        path = Path(path)
        self.inputs[key] = path
        return path

    def output(self, path) -> Path:
        path = Path(path)
        self.outputs.append(path)
        return path

    @property
    def test_year(self) -> int:
        if self.cfg.test_year is None:
            raise ConfigurationError(f"{self.command} needs --test-year", key="test_year")
        return self.cfg.test_year

    def corpus_path(self):
        return self.cfg.paths.corpus or self.out / "corpus.jsonl"

    def labels_path(self):
        return self.cfg.paths.labels or self.out / "labels.csv"

    def checkpoint_dir(self, seed: int) -> Path:
        return self.out / "checkpoints" / f"seed{seed}"

    def seed_range(self) -> list[int]:
        return list(range(self.cfg.seed, self.cfg.seed + self.cfg.repetitions))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _echo_config(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d["paths"] = {k: (Path(v).name if v else None) for k, v in d["paths"].items()}
    return d


def write_manifest(run: Run) -> Path:
    outputs = {}
    for path in sorted(set(run.outputs)):
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        for f in files:
            rel = f.relative_to(run.out).as_posix()
            outputs[rel] = None if f.name.startswith(_UNHASHED_PREFIXES) else _sha256(f)
    manifest = {
        "command": run.command,
        "config": _echo_config(run.cfg),
        "versions": {"xrisk": __version__, "python": platform.python_version(),
                     "torch": torch.__version__, "numpy": np.__version__},
        "seeds": run.seeds,
        "inputs": {k: {"file": p.name, "sha256": _sha256(p)} for k, p in sorted(run.inputs.items())},
        "outputs": outputs,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    path = run.out / "run_manifest.json"
    path.write_text(text, encoding="utf-8")
    print(f"run_manifest.json sha256 {hashlib.sha256(text.encode()).hexdigest()}")
    return path


def _vocabulary(run: Run, filings) -> Vocabulary:
    if run.cfg.paths.vocab:
        return Vocabulary.load(run.input(run.cfg.paths.vocab, "vocab"))
    return corpus_vocabulary(filings, run.cfg.vocab_max_size)


def cmd_synth(run: Run):
    spec = dataclasses.replace(run.cfg.synth, seed=run.cfg.seed)
    filings, labels = generate_synthetic_corpus(spec)
    write_corpus(filings, run.output(run.out / "corpus.jsonl"))
    write_labels(run.output(run.out / "labels.csv"), synthetic_volatility(labels, spec.seed), labels)
    print(f"synth: {len(filings)} filings, {sum(l.label == Label.RISKY for l in labels)} risky")


def cmd_ingest(run: Run):
    filings = read_corpus(run.input(run.corpus_path(), "corpus"))
    vocab = _vocabulary(run, filings)
    enc = run.cfg.model.encoder
    vocab.save(run.output(run.out / "vocab.txt"))
    write_encoded(encode_corpus(filings, vocab, enc.T, run.cfg.model.L),
                  run.output(run.out / "encoded.jsonl"))
    print(f"ingest: {len(filings)} filings, vocabulary {len(vocab)}")


def cmd_label(run: Run):
    filings = read_corpus(run.input(run.corpus_path(), "corpus"))
    returns = read_returns(run.input(run.cfg.paths.returns, "returns"))
    factors = read_factors(run.input(run.cfg.paths.factors, "factors"))
    calendar = read_calendar(run.input(run.cfg.paths.calendar, "calendar"))
    records, skipped = [], []
    for f in filings:
        rec = post_event_volatility(f.doc_id, f.filing_date, returns.get(f.company_id, {}),
                                    factors, calendar)
        if rec is None:
            skipped.append(f.doc_id)
        else:
            records.append(rec)
    if skipped:
        log.warning("%d filings left unlabeled (fewer than 60 observations)", len(skipped))
    labels = label_by_year(records, {f.doc_id: f.year for f in filings}, run.cfg.labeling)
    write_labels(run.output(run.out / "labels.csv"), records, labels)
    print(f"label: {len(labels)} labeled, {len(skipped)} unlabeled")


def _split(run: Run):
    filings = read_corpus(run.input(run.corpus_path(), "corpus"))
    labels = read_labels(run.input(run.labels_path(), "labels"))
    return prepare_split(filings, labels, run.test_year)


def cmd_split(run: Run):
    data = _split(run)
    path = run.output(run.out / f"split_{run.test_year}.json")
    path.write_text(json.dumps({"test_year": data.split.test_year,
                                "n_train": len(data.split.train_doc_ids),
                                "n_test": len(data.split.test_doc_ids),
                                "train_doc_ids": list(data.split.train_doc_ids),
                                "test_doc_ids": list(data.split.test_doc_ids)}, indent=1) + "\n")
    print(f"split {run.test_year}: {len(data.split.train_doc_ids)} train, "
          f"{len(data.split.test_doc_ids)} test")


def cmd_train(run: Run):
    data = _split(run)
    vocab = _vocabulary(run, data.train)
    run.seeds = run.seed_range()
    for seed in run.seeds:
        model, history, tc = train_seed(data, vocab, run.cfg.model, run.cfg.training, seed,
                                        run.cfg.val_fraction)
        ckpt = run.output(save_checkpoint(run.checkpoint_dir(seed), model, tc))
        vocab.save(ckpt / "vocab.txt")
        write_history(run.output(run.out / f"history_seed{seed}.csv"), history)
        print(f"train seed {seed}: {len(history)} epochs, best val F1 "
              f"{max(h.val_f1 for h in history):.4f}")


def _load(run: Run, seed: int):
    path = Path(run.cfg.paths.checkpoint) if run.cfg.paths.checkpoint else run.checkpoint_dir(seed)
    if not (path / "manifest.json").exists():
        raise ConfigurationError(f"{run.command}: no checkpoint at {path}; run `xrisk train` first",
                                 key="checkpoint")
    run.inputs[f"checkpoint_seed{seed}"] = path / "tensors.bin"
    model, _ = load_checkpoint(path)
    vocab_path = Path(run.cfg.paths.vocab) if run.cfg.paths.vocab else path / "vocab.txt"
    return model, Vocabulary.load(run.input(vocab_path, "vocab"))


def cmd_eval(run: Run):
    data = _split(run)
    run.seeds = run.seed_range()
    reports = []
    for seed in run.seeds:
        model, vocab = _load(run, seed)
        reports.append(evaluate_model(model, data, vocab, seed))
    mean = mean_report(reports)
    year = run.test_year
    write_metrics_csv(run.output(run.out / f"metrics_{year}.csv"), reports, mean)
    baseline = tfidf_logreg_baseline([f.text for f in data.train], targets_of(data.train_labels),
                                     [f.text for f in data.test], targets_of(data.test_labels), year)
    write_metrics_csv(run.output(run.out / f"baseline_{year}.csv"), [baseline])
    plotting.metric_bars([r.as_row() for r in reports + [mean]],
                         run.output(run.out / f"metrics_{year}.png"))
    print(f"eval {year}: mean F1 {mean.f1_risky:.4f}, tau-b {mean.kendall_tau_b:.4f}, "
          f"rho {mean.spearman_rho:.4f}; baseline F1 {baseline.f1_risky:.4f}")


def _test_traces(run: Run):
    model, vocab = _load(run, run.cfg.seed)
    data = _split(run)
    cfg = model.config
    return predict(model, encode_corpus(data.test, vocab, cfg.encoder.T, cfg.L), vocab)


def _clouds(run: Run, traces):
    e = run.cfg.explain
    return [build_filtered_word_cloud(traces, cls, run.test_year, e.word_cutoff,
                                      e.sentence_cutoff, e.stoplist)
            for cls in (Label.RISKY, Label.NON_RISKY)]


def cmd_explain(run: Run):
    traces = _test_traces(run)
    e = run.cfg.explain
    out = run.out / f"explain_{run.test_year}"
    for path in render_report(out, traces[: e.max_docs], _clouds(run, traces), e.top_k,
                              sentence_cutoff=e.sentence_cutoff):
        run.output(path)
    print(f"explain {run.test_year}: {min(len(traces), e.max_docs)} documents -> {out}")


def cmd_cloud(run: Run):
    traces = _test_traces(run)
    for cloud in _clouds(run, traces):
        path = run.output(write_cloud(cloud, run.out))
        color = plotting.RISKY_COLOR if cloud.cls == Label.RISKY else plotting.NONRISKY_COLOR
        run.output(plotting.cloud_bars(cloud.counts, f"{cloud.cls.value} words ({run.test_year})",
                                       path.with_suffix(".png"), color=color))
        print(f"cloud {cloud.cls.value}: {len(cloud.counts)} distinct tokens")


HANDLERS = {"ingest": cmd_ingest, "label": cmd_label, "split": cmd_split, "train": cmd_train,
            "eval": cmd_eval, "explain": cmd_explain, "cloud": cmd_cloud, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key = value configuration file")
    common.add_argument("--test-year", type=int)
    common.add_argument("--repetitions", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--word-cutoff", type=float)
    common.add_argument("--sentence-cutoff", type=float)
    common.add_argument("--labeling", choices=("quintile", "median"))
    common.add_argument("--out", help="output directory (fallback: $XRISK_OUT)")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="xrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def run(command: str, cfg: RunConfig) -> int:
    torch.set_num_threads(cfg.threads)
    r = Run(cfg, command)
    r.out.mkdir(parents=True, exist_ok=True)
    HANDLERS[command](r)
    write_manifest(r)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in
                 ("test_year", "repetitions", "threads", "word_cutoff", "sentence_cutoff",
                  "labeling", "out", "seed")}
    try:
        cfg = parse_config(args.config, overrides)
        return run(args.command, cfg)
    except ConfigurationError as exc:
        print(f"xrisk: configuration error: {exc}", file=sys.stderr)
        return 2
    except (XRiskError, OSError) as exc:
        print(f"xrisk: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
