"""Command-line entry point for the whole pipeline.

Settings come from an INI config file (sections mirror the package modules)
overridden by command-line flags; unknown config keys are rejected so silent
typos cannot change an experiment.  Every subcommand is deterministic: the
same inputs and seed produce byte-identical output files.

Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import annotate, baseline, checkpoint, synth, train
from .corpus import DocumentSet, default_abbreviations, load_abbreviations, load_corpus, save_corpus, segment
from .errors import SparsedocError, ValidationError
from .filtering import Route, apply_annotations, filter_corpus, load_entity_records, write_entity_records
from .model import doc_forward
from .vocab import expand_from_seed, load_stopwords, load_vocab, save_vocab, truncate_top_n

# -- configuration

_SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "task": {
        "classes": (str, "current,former,never"),
        "default_label": (str, "never"),
        "language": (str, "en"),
    },
    "encoder": {
        "dim": (int, 64),
        "layers": (int, 2),
        "heads": (int, 4),
        "max_len": (int, 128),
        "min_freq": (int, 2),
    },
    "train": {
        "learning_rate": (float, 2e-5),
        "batch_size": (int, 4),
        "patience": (int, 5),
        "smoothing": (float, 0.1),
        "lam": (str, "auto"),
        "max_epochs": (int, 50),
        "beta1": (float, 0.9),
        "beta2": (float, 0.999),
        "eps": (float, 1e-8),
        "weight_decay": (float, 0.01),
        "val_fraction": (float, 0.2),
    },
    "expand": {
        "n": (int, 10),
        "min_freq": (int, 3),
        "window": (int, 5),
    },
    "run": {
        "seed": (int, 0),
        "threads": (int, 1),
    },
}


def load_run_config(path: str | Path | None) -> dict[str, dict]:
    """Schema defaults, overlaid with the INI file when one is given."""
    merged = {section: {k: default for k, (_, default) in keys.items()} for section, keys in _SCHEMA.items()}
    if path is None:
        return merged
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValidationError(f"config file {path} not found")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValidationError(f"{path}: unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ValidationError(f"{path}: unknown config key {section}.{key}")
            kind, _ = _SCHEMA[section][key]
            try:
                merged[section][key] = kind(raw)
            except ValueError as exc:
                raise ValidationError(f"{path}: bad value for {section}.{key}: {raw!r}") from exc
    return merged


def format_config(cfg: dict[str, dict]) -> str:
    lines = []
    for section, keys in cfg.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in keys.items())
        lines.append("")
    return "\n".join(lines)


def _train_config(cfg: dict[str, dict], args: argparse.Namespace) -> train.TrainConfig:
    t = dict(cfg["train"])
    for flag in ("learning_rate", "batch_size", "patience", "max_epochs", "lam"):
        value = getattr(args, flag, None)
        if value is not None:
            t[flag] = value
    lam = t.pop("lam")
    if isinstance(lam, str):
        lam = None if lam == "auto" else float(lam)
    t.pop("val_fraction", None)
    return train.TrainConfig(seed=cfg["run"]["seed"], lam=lam, **t)


def _classes(cfg: dict[str, dict], args: argparse.Namespace) -> tuple[str, ...]:
    raw = getattr(args, "classes", None) or cfg["task"]["classes"]
    classes = tuple(c.strip() for c in raw.split(",") if c.strip())
    if len(classes) < 2:
        raise ValidationError(f"need at least 2 classes, got {classes!r}")
    return classes


def _default_label(cfg: dict[str, dict], args: argparse.Namespace) -> str:
    return getattr(args, "default_label", None) or cfg["task"]["default_label"]


def _abbreviations(args: argparse.Namespace) -> tuple[str, ...]:
    path = getattr(args, "abbreviations", None)
    return load_abbreviations(path) if path else default_abbreviations()


def _write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _provider_factory(corpus: DocumentSet, cfg: dict[str, dict]):
    e = cfg["encoder"]
    return train.default_provider_factory(
        corpus, dim=e["dim"], layers=e["layers"], heads=e["heads"], max_len=e["max_len"], min_freq=e["min_freq"]
    )


def _split_train_val(ids: list[str], val_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_val = max(1, round(val_fraction * len(order)))
    if n_val >= len(order):
        raise ValidationError(f"{len(order)} documents cannot be split {1 - val_fraction:.0%}/{val_fraction:.0%}")
    return order[n_val:], order[:n_val]


# -- subcommands


def cmd_segment(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    abbrevs = _abbreviations(args)
    with open(args.out, "w", encoding="utf-8") as fh:
        for doc in corpus:
            for sent in segment(doc, abbrevs):
                fh.write(
                    json.dumps(
                        {
                            "doc_id": sent.doc_id,
                            "index": sent.index,
                            "start": sent.char_span[0],
                            "end": sent.char_span[1],
                            "text": sent.text(doc.text),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    return 0


def cmd_expand_vocab(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    stop = load_stopwords(args.stopwords or cfg["task"]["language"])
    vocab = expand_from_seed(
        args.seed_term,
        corpus,
        n=args.n or cfg["expand"]["n"],
        min_freq=cfg["expand"]["min_freq"],
        stopwords=stop,
    )
    save_vocab(vocab, args.out)
    return 0


def cmd_filter(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    vocab = load_vocab(args.vocab)
    filtered = filter_corpus(corpus, vocab, _default_label(cfg, args), _abbreviations(args))
    count = write_entity_records(filtered, corpus, args.out)
    if args.routes_out:
        with open(args.routes_out, "w", encoding="utf-8") as fh:
            for f in filtered:
                fh.write(
                    json.dumps(
                        {"doc_id": f.doc_id, "route": f.route.value, "label": f.label, "entities": len(f.entities)}
                    )
                    + "\n"
                )
    print(f"{count} entities from {len(corpus)} documents -> {args.out}")
    return 0


def _load_filtered(cfg, args, corpus: DocumentSet):
    vocab = load_vocab(args.vocab)
    filtered = filter_corpus(corpus, vocab, _default_label(cfg, args), _abbreviations(args))
    annotations_path = getattr(args, "annotations", None)
    if annotations_path:
        filtered = apply_annotations(filtered, annotate.load_annotation_export(annotations_path))
    return filtered


def cmd_train(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    classes = _classes(cfg, args)
    default_label = _default_label(cfg, args)
    filtered = _load_filtered(cfg, args, corpus)
    tcfg = _train_config(cfg, args)
    train_ids, val_ids = _split_train_val([f.doc_id for f in filtered], cfg["train"]["val_fraction"], tcfg.seed)
    by_id = {f.doc_id: f for f in filtered}
    provider = _provider_factory(corpus, cfg)(train_ids, tcfg.seed)
    result = train.train_model(
        [by_id[i] for i in train_ids], [by_id[i] for i in val_ids], corpus, classes, provider, tcfg, default_label
    )
    ckpt = checkpoint.Checkpoint(
        classes=classes,
        default_label=default_label,
        head=result.head,
        encoder_config=provider.config,
        encoder_params=result.encoder_params,
        token_vocab=provider.vocab,
    )
    checkpoint.save_checkpoint(args.out, ckpt)
    if args.history_out:
        with open(args.history_out, "w", encoding="utf-8") as fh:
            for rec in result.history:
                fh.write(json.dumps(rec.to_dict()) + "\n")
    print(
        f"trained {len(train_ids)} docs ({result.annotated_entities} annotated entities, lam={result.lam}), "
        f"best epoch {result.best_epoch} val balanced accuracy {result.best_val_balanced_accuracy:.4f} -> {args.out}"
    )
    return 0


def cmd_evaluate(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    ckpt = checkpoint.load_checkpoint(args.checkpoint)
    vocab = load_vocab(args.vocab)
    filtered = filter_corpus(corpus, vocab, ckpt.default_label, _abbreviations(args))
    metrics = train.evaluate_filtered(
        filtered, corpus, ckpt.provider(), ckpt.head, ckpt.default_label, ckpt.classes
    )
    _write_json(args.out, metrics.to_dict())
    print(f"accuracy {metrics.accuracy:.4f} balanced accuracy {metrics.balanced_accuracy:.4f} -> {args.out}")
    return 0


def cmd_predict(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    ckpt = checkpoint.load_checkpoint(args.checkpoint)
    vocab = load_vocab(args.vocab)
    filtered = filter_corpus(corpus, vocab, ckpt.default_label, _abbreviations(args))
    provider = ckpt.provider()
    with open(args.out, "w", encoding="utf-8") as fh:
        for f in filtered:
            if f.route is Route.CASE_A:
                fh.write(json.dumps({"doc_id": f.doc_id, "label": ckpt.default_label, "route": "case_a"}) + "\n")
                continue
            pred = doc_forward(provider.embed(f.entities), ckpt.head)
            fh.write(
                json.dumps(
                    {
                        "doc_id": f.doc_id,
                        "label": ckpt.classes[pred.predicted_index],
                        "route": "case_b",
                        "probs": {c: float(p) for c, p in zip(ckpt.classes, pred.probs)},
                    }
                )
                + "\n"
            )
    return 0


def cmd_crossval(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    classes = _classes(cfg, args)
    filtered = _load_filtered(cfg, args, corpus)
    tcfg = _train_config(cfg, args)
    result = train.cross_validate(
        filtered,
        corpus,
        classes,
        _default_label(cfg, args),
        _provider_factory(corpus, cfg),
        tcfg,
        k=args.k,
        threads=cfg["run"]["threads"],
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = result.to_dict()
    for fold in report["folds"]:
        _write_json(out_dir / f"fold{fold['fold']}.json", fold)
    _write_json(out_dir / "report.json", report)
    print(
        f"{args.k}-fold mean accuracy {result.mean_accuracy:.4f} "
        f"balanced accuracy {result.mean_balanced_accuracy:.4f} -> {out_dir / 'report.json'}"
    )
    return 0


def cmd_baseline(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    classes = _classes(cfg, args)
    language = cfg["task"]["language"]
    result = baseline.baseline_cross_validate(
        corpus, classes, seed=cfg["run"]["seed"], k=args.k, stopwords=load_stopwords(language), language=language
    )
    _write_json(args.out, result.to_dict())
    print(
        f"baseline {args.k}-fold mean accuracy {result.mean_accuracy:.4f} "
        f"balanced accuracy {result.mean_balanced_accuracy:.4f} -> {args.out}"
    )
    return 0


def cmd_synth_gen(cfg, args) -> int:
    scfg = synth.SynthConfig(
        n_docs=args.n_docs,
        sentences_per_doc=args.sentences,
        relevant_per_doc=args.relevant,
        distractor_rate=args.distractor_rate,
        seed=cfg["run"]["seed"],
    )
    result = synth.generate(scfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_corpus(list(result.corpus), out_dir / "corpus.jsonl")
    save_vocab(result.vocab, out_dir / "vocab.txt")
    annotate.write_annotation_export(result.annotations, out_dir / "annotations.jsonl")
    print(
        f"{scfg.n_docs} documents, {len(result.annotations)} entities "
        f"({sum(result.annotations.values())} relevant) -> {out_dir}"
    )
    return 0


def cmd_annotate_serve(cfg, args) -> int:
    records = load_entity_records(args.entities)
    store = annotate.AnnotationStore(args.store)
    server = annotate.make_server(records, store, host=args.host, port=args.port, ui_dir=args.ui)
    host, port = server.server_address[:2]
    print(f"serving {len(records)} entities on http://{host}:{port} (store: {args.store})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        store.close()
    return 0


def cmd_vocab_ablation(cfg, args) -> int:
    corpus = load_corpus(args.corpus)
    classes = _classes(cfg, args)
    default_label = _default_label(cfg, args)
    vocab = load_vocab(args.vocab)
    tcfg = _train_config(cfg, args)
    abbrevs = _abbreviations(args)
    factory = _provider_factory(corpus, cfg)
    rows = []
    for n in (10, 20, 30, 40, 50):
        truncated = truncate_top_n(vocab, n)
        filtered = filter_corpus(corpus, truncated, default_label, abbrevs)
        result = train.cross_validate(
            filtered, corpus, classes, default_label, factory, tcfg, k=args.k, threads=cfg["run"]["threads"]
        )
        rows.append(
            {
                "n": n,
                "terms_used": len(truncated.terms),
                "accuracy": result.mean_accuracy,
                "balanced_accuracy": result.mean_balanced_accuracy,
            }
        )
        print(f"N={n:3d} accuracy {result.mean_accuracy:.4f} balanced accuracy {result.mean_balanced_accuracy:.4f}")
    _write_json(args.out, {"rows": rows})
    return 0


# -- argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsedoc",
        description="Keyword-filtered attention classification for long documents with sparse relevant signal.",
    )
    parser.add_argument("--config", help="INI config file; flags override file values")
    parser.add_argument("--seed", type=int, help="global random seed")
    parser.add_argument("--threads", type=int, help="worker threads for cross-validation folds")
    parser.add_argument("--print-config", action="store_true", help="print the merged configuration and exit")
    sub = parser.add_subparsers(dest="command")

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("segment", cmd_segment, "split documents into sentences")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--abbreviations")

    p = add("expand-vocab", cmd_expand_vocab, "grow a term list from a seed term")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed-term", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--stopwords", help="language code (en/fr) or stopword file")

    p = add("filter", cmd_filter, "extract target-term entities and route documents")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--routes-out")
    p.add_argument("--default-label")
    p.add_argument("--abbreviations")

    def train_like(p: argparse.ArgumentParser, annotations: bool = True) -> None:
        p.add_argument("--corpus", required=True)
        p.add_argument("--vocab", required=True)
        p.add_argument("--classes")
        p.add_argument("--default-label")
        p.add_argument("--abbreviations")
        if annotations:
            p.add_argument("--annotations")
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--max-epochs", dest="max_epochs", type=int)
        p.add_argument("--lam", type=float)

    p = add("train", cmd_train, "train a model on one split")
    train_like(p)
    p.add_argument("--out", required=True)
    p.add_argument("--history-out")

    p = add("evaluate", cmd_evaluate, "score a checkpoint against gold labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--abbreviations")

    p = add("predict", cmd_predict, "label documents with a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--abbreviations")

    p = add("crossval", cmd_crossval, "k-fold cross-validation of the model")
    train_like(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out-dir", required=True)

    p = add("baseline", cmd_baseline, "TF-IDF logistic-regression baseline, same folds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--classes")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", required=True)

    p = add("synth-gen", cmd_synth_gen, "generate a synthetic sparse-signal corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-docs", dest="n_docs", type=int, required=True)
    p.add_argument("--sentences", type=int, default=40)
    p.add_argument("--relevant", type=int, default=1)
    p.add_argument("--distractor-rate", dest="distractor_rate", type=float, default=0.3)

    p = add("annotate-serve", cmd_annotate_serve, "serve entities for expert annotation over HTTP")
    p.add_argument("--entities", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static directory served under /ui")

    p = add("vocab-ablation", cmd_vocab_ablation, "cross-validate at vocabulary sizes 10..50")
    train_like(p, annotations=False)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.threads is not None:
            cfg["run"]["threads"] = args.threads
        if args.print_config:
            print(format_config(cfg), end="")
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        return args.func(cfg, args)
    except SparsedocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
