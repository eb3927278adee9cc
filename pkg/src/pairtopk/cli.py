"""Command-line entry point: ``pairtopk <command> --out DIR [options]``.

Every option can also come from a ``key=value`` file passed with
``--config``; flags given on the command line win.  Each command writes the
fully resolved configuration to ``DIR/config.txt`` so a run can be repeated
with ``--config DIR/config.txt``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from pairtopk.config import format_key_values, read_key_values
from pairtopk.corpus import (
    DEFAULT_WINDOW,
    SyntheticSpec,
    Vocabulary,
    generate_synthetic_corpus,
    load_annotations,
    load_pair_dataset,
    make_instances,
    make_vocabulary,
    read_gold,
    write_annotations,
    write_gold,
    write_pair_dataset,
    write_stats_csv,
)
from pairtopk.corpus.synthetic import DEFAULT_SIGNALS
from pairtopk.errors import ComparabilityError, ConfigError, DataError, PairTopKError
from pairtopk.evidence import (
    dump_evidence,
    feature_distribution,
    join_annotations,
    load_evidence,
    records_from_traces,
    role_separation,
    signal_recovery,
    stability_report,
    write_distribution_csv,
    write_stability_csv,
)
from pairtopk.evidence.analysis import FEATURE_KINDS
from pairtopk.model import ROLES, ModelConfig, PairTopKModel
from pairtopk.tensor import load_checkpoint, save_checkpoint
from pairtopk.train import TrainConfig, compute_metrics, predict_labels, sweep_k, train

log = logging.getLogger("pairtopk")


@dataclass(frozen=True)
class Option:
    name: str
    kind: type
    default: object = None
    help: str = ""
    path: bool = False  # must name an existing file


_MODEL = ModelConfig()
_TRAIN = TrainConfig()
# The library default (1e-5) suits a pretrained encoder; a model trained from
# scratch at desk scale needs a larger step.
DESK_LEARNING_RATE = 3e-3

DATA_OPTIONS = [
    Option("pairs", str, None, "pairs JSONL file", path=True),
    Option("label_set", str, "", "dataset name (tbd, matres, tddman, tddauto) or comma list; default: labels in file"),
    Option("window", int, DEFAULT_WINDOW, "context window size in words"),
    Option("exclude", str, "", "comma-separated labels dropped from scoring by gold label, e.g. v"),
]
MODEL_OPTIONS = [
    Option("d_model", int, _MODEL.d_model),
    Option("n_heads", int, _MODEL.n_heads),
    Option("encoder_layers", int, _MODEL.encoder_layers),
    Option("ffn_hidden", int, _MODEL.ffn_hidden),
    Option("dropout", float, _MODEL.dropout),
    Option("top_k", int, _MODEL.top_k, "evidence tokens kept per query"),
    Option("max_words", int, _MODEL.max_words),
]
TRAIN_OPTIONS = [
    Option("lr", float, DESK_LEARNING_RATE),
    Option("batch_size", int, _TRAIN.batch_size),
    Option("epochs", int, _TRAIN.epochs),
    Option("weight_decay", float, _TRAIN.weight_decay),
    Option("eval_every", int, _TRAIN.eval_every),
]
SYNTH_OPTIONS = [
    Option("n_train", int, SyntheticSpec.n_train),
    Option("n_validation", int, SyntheticSpec.n_validation),
    Option("n_test", int, SyntheticSpec.n_test),
    Option("vocab_size", int, SyntheticSpec.vocab_size),
    Option("n_events", int, SyntheticSpec.n_events),
    Option("signal_words", str, ",".join(f"{k}:{v}" for k, v in DEFAULT_SIGNALS.items())),
    Option("distance", str, f"uniform:{SyntheticSpec.distance_min}:{SyntheticSpec.distance_max}"),
    Option("margin_min", int, SyntheticSpec.margin_min),
    Option("margin_max", int, SyntheticSpec.margin_max),
    Option("max_entity_len", int, SyntheticSpec.max_entity_len),
]

COMMANDS: dict[str, tuple[str, list[Option]]] = {
    "synth": ("generate a planted-signal synthetic corpus", SYNTH_OPTIONS),
    "stats": ("entity-pair distance statistics", [DATA_OPTIONS[0], DATA_OPTIONS[1]]),
    "train": ("train a model and evaluate it on the test split", DATA_OPTIONS + MODEL_OPTIONS + TRAIN_OPTIONS),
    "eval": ("evaluate a checkpoint and dump top-K evidence", [
        Option("checkpoint", str, None, "checkpoint.bin from train", path=True),
        Option("pairs", str, None, "pairs JSONL file", path=True),
        Option("split", str, "test"),
        Option("top_k", int, 0, "evidence size at evaluation; 0 keeps the trained value"),
        Option("exclude", str, "", "comma-separated labels dropped from scoring"),
    ]),
    "sweep-k": ("train and score one model per K", DATA_OPTIONS + MODEL_OPTIONS + TRAIN_OPTIONS + [
        Option("k_min", int, 1),
        Option("k_max", int, 20),
        Option("dump_evidence", int, 0, "1 writes evidence_k{K}.jsonl for every K"),
    ]),
    "analyze": ("linguistic profile and K-stability of evidence dumps", [
        Option("evidence", str, None, "comma-separated evidence JSONL files"),
        Option("pairs", str, None, "pairs JSONL file", path=True),
        Option("annotations", str, None, "annotation TSV file", path=True),
        Option("gold", str, "", "gold evidence JSONL (synthetic corpora)"),
    ]),
}
DEFAULT_SEED = {"synth": SyntheticSpec.seed}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairtopk", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, (summary, options) in COMMANDS.items():
        p = sub.add_parser(command, help=summary, description=summary)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--config", default=None, help="key=value file; flags override it")
        for opt in options:
            extra = f" (default: {opt.default})" if opt.default not in (None, "") else ""
            p.add_argument(_flag(opt.name), dest=opt.name, type=opt.kind, default=argparse.SUPPRESS,
                           help=opt.help + extra)
    return parser


def _coerce(opt: Option, raw) -> object:
    try:
        return opt.kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{opt.name} must be {opt.kind.__name__}, got {raw!r}") from exc


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    options = {o.name: o for o in COMMANDS[command][1]}
    options["seed"] = Option("seed", int, DEFAULT_SEED.get(command, 0))
    resolved = {name: opt.default for name, opt in options.items()}
    if args.config:
        for key, raw in read_key_values(args.config).items():
            if key not in options:
                raise ConfigError(f"{args.config}: unknown key {key!r} for {command}")
            resolved[key] = _coerce(options[key], raw)
    for name, opt in options.items():
        if name in vars(args):
            resolved[name] = getattr(args, name)
    for name, opt in options.items():
        if resolved[name] is None:
            raise ConfigError(f"{_flag(name)} is required for {command}")
        if opt.path and not Path(resolved[name]).is_file():
            raise ConfigError(f"{name}: file {resolved[name]} does not exist")
    return resolved


def _labels(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _excluded_ids(labels: tuple[str, ...], text: str) -> list[int]:
    ids = []
    for name in _labels(text):
        if name not in labels:
            raise ConfigError(f"excluded label {name!r} not in label set {list(labels)}")
        ids.append(labels.index(name))
    return ids


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _model_config(cfg: dict, vocab: Vocabulary, n_labels: int, top_k: int | None = None) -> ModelConfig:
    return ModelConfig(
        d_model=cfg["d_model"], n_heads=cfg["n_heads"], encoder_layers=cfg["encoder_layers"],
        ffn_hidden=cfg["ffn_hidden"], dropout=cfg["dropout"], top_k=top_k or cfg["top_k"],
        n_labels=n_labels, vocab_size=len(vocab), max_words=cfg["max_words"], seed=cfg["seed"],
    ).validate()


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["lr"], batch_size=cfg["batch_size"], epochs=cfg["epochs"], seed=cfg["seed"],
        eval_every=cfg["eval_every"], weight_decay=cfg["weight_decay"], excluded_labels=_labels(cfg["exclude"]),
    ).validate()


def _prepare(cfg: dict):
    dataset = load_pair_dataset(cfg["pairs"], label_set=cfg["label_set"] or None)
    if not dataset.split("train"):
        raise DataError(f"{cfg['pairs']}: no training pairs")
    vocab = make_vocabulary(dataset, cfg["window"])
    splits = {s: make_instances(dataset, s, cfg["window"], vocab) for s in ("train", "validation", "test")}
    return dataset, vocab, splits


def _metrics_payload(metrics, labels, split: str, top_k: int) -> dict:
    return {"split": split, "top_k": top_k, "labels": list(labels), **metrics.to_dict()}


def cmd_synth(cfg: dict, out: Path) -> None:
    values = {k: str(v) for k, v in cfg.items()}
    spec = SyntheticSpec.from_mapping(values)
    corpus = generate_synthetic_corpus(spec)
    write_pair_dataset(corpus.dataset, out / "pairs.jsonl")
    write_annotations(corpus.dataset.documents.values(), out / "annotations.tsv")
    write_gold(corpus, out / "gold.jsonl")


def cmd_stats(cfg: dict, out: Path) -> None:
    dataset = load_pair_dataset(cfg["pairs"], label_set=cfg["label_set"] or None)
    write_stats_csv(dataset, out / "stats.csv")


def cmd_train(cfg: dict, out: Path) -> None:
    dataset, vocab, splits = _prepare(cfg)
    labels = dataset.label_set
    excluded = _excluded_ids(labels, cfg["exclude"])
    model = PairTopKModel(_model_config(cfg, vocab, len(labels)), vocab.fingerprint)
    result = train(model, splits["train"], _train_config(cfg), splits["validation"] or None, excluded)
    meta = {
        "model": model.config.to_dict(),
        "vocab": vocab.to_list(),
        "labels": list(labels),
        "window": cfg["window"],
        "best_epoch": result.best_epoch,
    }
    save_checkpoint(out / "checkpoint.bin", model.params.snapshot(), seed=cfg["seed"], step=result.steps, meta=meta)
    _write_csv(out / "curve.csv", ["epoch", "train_loss", "val_f1"],
               [(e, round(loss, 6), "" if f != f else round(f, 6)) for e, loss, f in result.curve])
    split = "test" if splits["test"] else "validation"
    pred, _ = predict_labels(model, splits[split])
    metrics = compute_metrics([i.label for i in splits[split]], pred, len(labels), excluded)
    payload = _metrics_payload(metrics, labels, split, model.config.top_k)
    payload.update(best_epoch=result.best_epoch, best_val_f1=result.best_f1, steps=result.steps)
    _write_json(out / "metrics.json", payload)


def load_model(path) -> tuple[PairTopKModel, Vocabulary, tuple[str, ...], int]:
    arrays, _, _, meta = load_checkpoint(path)
    for key in ("model", "vocab", "labels", "window"):
        if key not in meta:
            raise DataError(f"{path}: checkpoint metadata lacks {key!r}")
    vocab = Vocabulary.from_list(meta["vocab"])
    model = PairTopKModel(ModelConfig.from_dict(meta["model"]), vocab.fingerprint)
    model.params.load(arrays)
    return model, vocab, tuple(meta["labels"]), int(meta["window"])


def cmd_eval(cfg: dict, out: Path) -> None:
    model, vocab, labels, window = load_model(cfg["checkpoint"])
    dataset = load_pair_dataset(cfg["pairs"], label_set=labels)
    instances = make_instances(dataset, cfg["split"], window, vocab)
    if not instances:
        raise DataError(f"split {cfg['split']!r} of {cfg['pairs']} is empty")
    k = cfg["top_k"] or model.config.top_k
    excluded = _excluded_ids(labels, cfg["exclude"])
    pred, traces = predict_labels(model, instances, top_k=k, keep_traces=True)
    metrics = compute_metrics([i.label for i in instances], pred, len(labels), excluded)
    _write_json(out / "metrics.json", _metrics_payload(metrics, labels, cfg["split"], k))
    dump_evidence(records_from_traces(instances, traces, pred, labels, k), out / "evidence.jsonl")


def cmd_sweep_k(cfg: dict, out: Path) -> None:
    if not 1 <= cfg["k_min"] <= cfg["k_max"]:
        raise ConfigError(f"need 1 <= k_min <= k_max, got {cfg['k_min']}..{cfg['k_max']}")
    dataset, vocab, splits = _prepare(cfg)
    labels = dataset.label_set
    excluded = _excluded_ids(labels, cfg["exclude"])

    def factory(k: int) -> PairTopKModel:
        return PairTopKModel(_model_config(cfg, vocab, len(labels), top_k=k), vocab.fingerprint)

    def dump(k: int, model: PairTopKModel) -> None:
        if cfg["dump_evidence"]:
            pred, traces = predict_labels(model, splits["test"], keep_traces=True)
            dump_evidence(records_from_traces(splits["test"], traces, pred, labels, k), out / f"evidence_k{k}.jsonl")

    rows = sweep_k(factory, splits["train"], splits["test"], range(cfg["k_min"], cfg["k_max"] + 1),
                   _train_config(cfg), splits["validation"] or None, excluded, on_model=dump)
    _write_csv(out / "sweep.csv", ["k", "precision", "recall", "micro_f1"],
               [(r["k"], round(r["precision"], 6), round(r["recall"], 6), round(r["micro_f1"], 6)) for r in rows])


def cmd_analyze(cfg: dict, out: Path) -> None:
    paths = [p for p in _labels(cfg["evidence"])]
    for p in paths:
        if not Path(p).is_file():
            raise ConfigError(f"evidence: file {p} does not exist")
    dataset = load_pair_dataset(cfg["pairs"])
    load_annotations(cfg["annotations"], dataset.documents)
    dumps = {}
    for p in paths:
        records = load_evidence(p)
        if not records:
            raise DataError(f"{p}: no evidence records")
        k = records[0].k
        if k in dumps:
            raise ComparabilityError(f"two evidence dumps for K={k}")
        dumps[k] = records
    gold = read_gold(cfg["gold"]) if cfg["gold"] else None
    summary: dict = {"dumps": {}}
    for k, records in sorted(dumps.items()):
        entry: dict = {"join": join_annotations(records, dataset.documents), "distributions": {}}
        for role in (*ROLES, "all"):
            for kind in FEATURE_KINDS:
                dist = feature_distribution(records, role, kind)
                write_distribution_csv(dist, out / f"features_k{k}_{role}_{kind.lower()}.csv")
                entry["distributions"][f"{role}/{kind}"] = {
                    "total": dist.total, "n_tokens": dist.n_tokens, "n_special": dist.n_special,
                }
        if gold is not None:
            entry["recovery"] = {role: signal_recovery(records, gold, role) for role in ROLES}
            signals = {g["signal"] for g in gold.values()}
            entry["role_separation"] = role_separation(records, signals)
        summary["dumps"][str(k)] = entry
    if len(dumps) > 1:
        rows = stability_report(dumps)
        write_stability_csv(rows, out / "stability.csv")
    _write_json(out / "summary.json", summary)


HANDLERS = {
    "synth": cmd_synth,
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-k": cmd_sweep_k,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args.command, args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(format_key_values(cfg), encoding="utf-8")
        HANDLERS[args.command](cfg, out)
    except PairTopKError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
