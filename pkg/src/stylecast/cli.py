"""Command-line entry point for the full pipeline.

Subcommands: ingest, train-gen, train-clf, generate, classify, project,
eval. Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 runtime failure. Diagnostics go to stderr, results to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import text
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigValidationError, RunConfig, load_config, require_paths
from .fileio import atomic_write_text
from .generate import GenerationError, SamplingPolicy, generate
from .model import ConfigError, clf_forward, convert_to_classifier, extract_latent, init_params
from .projection import (
    ProjectionError, cast_overlay, emit_scatter_svg, project_latents, write_latents,
)
from .style import CorpusStats, StyleError, StyleSpec
from .text import CorpusError, Vocab, build_vocab, load_jsonl
from .train import (
    TrainError, clf_samples_from_articles, corpus_stats, evaluate_accuracy,
    evaluate_lm, fine_tune_classifier, lm_samples_from_articles, train_lm,
)

DATA_ERRORS = (ConfigValidationError, CorpusError, CheckpointError, TrainError,
               StyleError, ProjectionError, GenerationError, ConfigError,
               FileNotFoundError)


class UsageError(Exception):
    pass


def _verbose() -> bool:
    return os.environ.get("STYLECAST_LOG", "").lower() in ("1", "debug", "info", "verbose")


def _log_metrics(log) -> None:
    if _verbose():
        for epoch, split, metric, value in log.rows:
            print(f"epoch {epoch} {split} {metric}={value:.6g}", file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 instead of argparse's 2
        raise UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    p = _Parser(prog="stylecast", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="command")

    def common(sp):
        sp.add_argument("--config", required=True, help="flat JSON run config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (value parsed as JSON when possible)")

    common(sub.add_parser("ingest", help="validate a JSONL corpus and write the vocab"))
    common(sub.add_parser("train-gen", help="train the styled char language model"))

    tc = sub.add_parser("train-clf", help="train the section classifier")
    common(tc)

    g = sub.add_parser("generate", help="generate styled text")
    common(g)
    g.add_argument("--prompt", default="", help="start string (opens a main title)")
    g.add_argument("--section", default=None, help="section name or id")
    g.add_argument("--time", default=None, help="ISO-8601 timestamp, e.g. 2005-06-01T00:00:00Z")
    g.add_argument("--mode", choices=("greedy", "temperature", "top_k"), default=None)
    g.add_argument("--temperature", type=float, default=None)
    g.add_argument("--top-k", dest="top_k", type=int, default=None)
    g.add_argument("--seed", type=int, default=None, help="sampling seed")

    c = sub.add_parser("classify", help="classify a title into a section")
    common(c)
    c.add_argument("--title", required=True)

    pr = sub.add_parser("project", help="project title latents to an SVG scatter")
    common(pr)
    pr.add_argument("--cast", action="append", default=[], metavar="PHRASE",
                    help="overlay a phrase onto the scatter (repeatable)")
    pr.add_argument("--limit", type=int, default=None, help="cap the number of titles")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on the validation split")
    common(ev)
    return p


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        key, _, val = pair.partition("=")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _load(args) -> RunConfig:
    return load_config(args.config, _parse_overrides(args.set))


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _read_corpus(cfg: RunConfig) -> list:
    require_paths(cfg, "corpus")
    articles, report = load_jsonl(cfg.corpus, cfg.n_sections)
    for line in report:
        print(f"skipped: {line}", file=sys.stderr)
    if not articles:
        raise CorpusError(f"no usable articles in {cfg.corpus}")
    return articles


def _vocab_path(cfg: RunConfig) -> Path:
    return Path(cfg.vocab) if cfg.vocab else _out_dir(cfg) / "vocab.tsv"


def _load_or_build_vocab(cfg: RunConfig, articles) -> Vocab:
    path = _vocab_path(cfg)
    if path.exists():
        return Vocab.load(path)
    vocab = build_vocab(articles)
    vocab.save(path)
    print(f"vocab written: {path} ({vocab.size} ids)", file=sys.stderr)
    return vocab


def _parse_time(value: str) -> int:
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _section_id(value: str, names: list[str]) -> int:
    if value.isdigit() or (value.startswith("-") and value[1:].isdigit()):
        sid = int(value)
    elif value in names:
        sid = names.index(value)
    else:
        raise ConfigValidationError([f"unknown section {value!r}; known: {', '.join(names)}"])
    if not 0 <= sid < len(names):
        raise ConfigValidationError([f"section id {sid} out of range [0, {len(names)})"])
    return sid


def _stats_from_meta(meta: dict, n_sections: int) -> CorpusStats | None:
    if "t_min" in meta and "t_max" in meta:
        return CorpusStats(n_sections=n_sections, t_min=int(meta["t_min"]),
                           t_max=int(meta["t_max"]))
    return None


def _check_vocab(ckpt, vocab: Vocab) -> None:
    if ckpt.config.vocab_size != vocab.size:
        raise CheckpointError(
            f"checkpoint vocab size {ckpt.config.vocab_size} != vocab file {vocab.size}")


# -- subcommands --------------------------------------------------------------------


def _cmd_ingest(args) -> int:
    cfg = _load(args)
    articles = _read_corpus(cfg)
    vocab = build_vocab(articles)
    path = _vocab_path(cfg)
    vocab.save(path)
    labels = sorted({a.label for a in articles})
    print(f"articles: {len(articles)}")
    print(f"vocab: {path} ({vocab.size} ids)")
    print(f"sections present: {labels}")
    return 0


def _cmd_train_gen(args) -> int:
    cfg = _load(args)
    articles = _read_corpus(cfg)
    vocab = _load_or_build_vocab(cfg, articles)
    stats = corpus_stats(articles, cfg.n_sections)
    model_cfg = cfg.model_config(vocab.size, "lm")
    styled = model_cfg.style_mode != "none"
    samples = lm_samples_from_articles(articles, vocab, model_cfg.max_seq, styled=styled)
    params = init_params(model_cfg, seed=cfg.seed)
    best, log = train_lm(samples, params, model_cfg, cfg.train_config(), stats)
    _log_metrics(log)
    out = _out_dir(cfg)
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else out / "lm.ckpt"
    meta = {"config_hash": cfg.hash(), "t_min": stats.t_min, "t_max": stats.t_max,
            "section_names": cfg.section_names}
    save_checkpoint(best, model_cfg, ckpt, meta)
    metrics = out / "train-gen-metrics.csv"
    atomic_write_text(metrics, log.to_csv(cfg.hash()))
    val_loss = log.series("val", "loss")[-1]
    val_ppl = log.series("val", "perplexity")[-1]
    print(f"checkpoint: {ckpt}")
    print(f"metrics: {metrics}")
    print(f"val_loss={val_loss:.4f} val_perplexity={val_ppl:.2f}")
    return 0


def _cmd_train_clf(args) -> int:
    cfg = _load(args)
    articles = _read_corpus(cfg)
    vocab = _load_or_build_vocab(cfg, articles)
    model_cfg = cfg.model_config(vocab.size, "classifier")
    if cfg.init_from:
        require_paths(cfg, "init_from")
        base = load_checkpoint(cfg.init_from, expect_head="lm")
        _check_vocab(base, vocab)
        params, model_cfg = convert_to_classifier(base.params, base.config,
                                                  cfg.n_sections, cfg.title_len)
    else:
        params = init_params(model_cfg, seed=cfg.seed)
    samples = clf_samples_from_articles(articles, vocab, model_cfg.max_seq)
    best, log = fine_tune_classifier(samples, params, model_cfg, cfg.train_config(),
                                     freeze_backbone=cfg.freeze_backbone)
    _log_metrics(log)
    out = _out_dir(cfg)
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else out / "clf.ckpt"
    meta = {"config_hash": cfg.hash(), "section_names": cfg.section_names}
    save_checkpoint(best, model_cfg, ckpt, meta)
    metrics = out / "train-clf-metrics.csv"
    atomic_write_text(metrics, log.to_csv(cfg.hash()))
    print(f"checkpoint: {ckpt}")
    print(f"metrics: {metrics}")
    print(f"val_accuracy={log.series('val', 'accuracy')[-1]:.4f}")
    return 0


def _cmd_generate(args) -> int:
    cfg = _load(args)
    require_paths(cfg, "checkpoint", "vocab")
    ckpt = load_checkpoint(cfg.checkpoint, expect_head="lm")
    vocab = Vocab.load(cfg.vocab)
    _check_vocab(ckpt, vocab)
    names = ckpt.meta.get("section_names", cfg.section_names)
    spec = None
    stats = _stats_from_meta(ckpt.meta, ckpt.config.n_sections)
    if ckpt.config.style_mode != "none":
        if stats is None:
            raise CheckpointError("checkpoint lacks the corpus time range needed for style")
        section = _section_id(args.section, names) if args.section is not None else 0
        ts = _parse_time(args.time) if args.time else stats.t_max
        spec = StyleSpec(section_id=section, timestamp=ts)
    v = cfg.values
    policy = SamplingPolicy(
        mode=args.mode if args.mode is not None else v["sample_mode"],
        temperature=args.temperature if args.temperature is not None else v["temperature"],
        k=args.top_k if args.top_k is not None else v["top_k"],
        seed=args.seed if args.seed is not None else v["sample_seed"])
    print(generate(args.prompt, spec, policy, ckpt.params, ckpt.config, vocab, stats))
    return 0


def _cmd_classify(args) -> int:
    cfg = _load(args)
    require_paths(cfg, "checkpoint", "vocab")
    ckpt = load_checkpoint(cfg.checkpoint, expect_head="classifier")
    vocab = Vocab.load(cfg.vocab)
    _check_vocab(ckpt, vocab)
    names = ckpt.meta.get("section_names", cfg.section_names)
    ids = text.encode_title(args.title, vocab, ckpt.config.max_seq)
    logits = clf_forward(ckpt.params, ckpt.config, ids).data
    pred = int(np.argmax(logits))
    name = names[pred] if pred < len(names) else str(pred)
    print(f"{pred}\t{name}")
    return 0


def _cmd_project(args) -> int:
    cfg = _load(args)
    require_paths(cfg, "checkpoint")
    articles = _read_corpus(cfg)
    vocab = _load_or_build_vocab(cfg, articles)
    ckpt = load_checkpoint(cfg.checkpoint, expect_head="classifier")
    _check_vocab(ckpt, vocab)
    if args.limit:
        articles = articles[:args.limit]
    if len(articles) <= cfg.knn:
        raise ProjectionError(
            f"need more than knn={cfg.knn} titles to project, got {len(articles)}")
    latents = np.stack([
        extract_latent(ckpt.params, ckpt.config,
                       text.encode_title(a.main_title, vocab, ckpt.config.max_seq)).data
        for a in articles])
    labels = [a.label for a in articles]
    out = _out_dir(cfg)
    write_latents(out / "latents.bin", latents)
    result = project_latents(latents, labels, k=cfg.knn, epochs=cfg.layout_epochs,
                             seed=cfg.projection_seed)
    points = list(result.points)
    for phrase in args.cast:
        points.append(cast_overlay(phrase, ckpt.params, ckpt.config, vocab, result))
    names = ckpt.meta.get("section_names", cfg.section_names)
    svg = out / "scatter.svg"
    emit_scatter_svg(points, names, svg)
    print(f"latents: {out / 'latents.bin'}")
    print(f"scatter: {svg}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load(args)
    require_paths(cfg, "checkpoint")
    articles = _read_corpus(cfg)
    vocab = _load_or_build_vocab(cfg, articles)
    ckpt = load_checkpoint(cfg.checkpoint)
    _check_vocab(ckpt, vocab)
    if ckpt.config.head_type == "lm":
        stats = _stats_from_meta(ckpt.meta, ckpt.config.n_sections)
        styled = ckpt.config.style_mode != "none"
        samples = lm_samples_from_articles(articles, vocab, ckpt.config.max_seq, styled=styled)
        _, val = text.split_shuffled(samples, cfg.split_ratio, cfg.seed)
        loss, ppl = evaluate_lm(ckpt.params, ckpt.config, val, stats)
        print(f"val_loss={loss:.6f}")
        print(f"val_perplexity={ppl:.4f}")
    else:
        samples = clf_samples_from_articles(articles, vocab, ckpt.config.max_seq)
        _, val = text.split_shuffled(samples, cfg.split_ratio, cfg.seed)
        acc, confusion = evaluate_accuracy(ckpt.params, ckpt.config, val)
        print(f"val_accuracy={acc:.4f}")
        print("confusion:")
        for row_label, row in enumerate(confusion):
            print(f"  {row_label}: " + " ".join(str(int(v)) for v in row))
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train-gen": _cmd_train_gen,
    "train-clf": _cmd_train_clf,
    "generate": _cmd_generate,
    "classify": _cmd_classify,
    "project": _cmd_project,
    "eval": _cmd_eval,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage())
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main(argv: list[str] | None = None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
