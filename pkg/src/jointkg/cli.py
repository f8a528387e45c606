"""Command-line runner: every command writes its outputs plus a manifest into a fresh run directory."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from . import __version__
from .align import distant_label, read_raw_corpus, write_anchor_file, write_labeled
from .evaluate import entity_prediction_eval, relation_classification_eval, relation_prediction_eval, write_report
from .params import init_params, load_checkpoint, load_word_vectors, save_checkpoint, write_word_vectors
from .skipgram import read_plain_corpus, train_skipgram
from .synthetic import make_synthetic, write_synthetic
from .train import TrainConfig, init_from_skipgram, joint_train, train_transe, write_loss_history
from .vocab import TripleStore, Vocabulary, build_vocabulary, load_aligned_corpus

logger = logging.getLogger("jointkg")

INPUT_KEYS = ("raw", "train", "valid", "test", "anchors", "corpus", "word_vectors", "model")


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


DEFAULTS = {
    **asdict(TrainConfig()),
    "filtered": True,
    "threads": None,
    "out": "runs",
    "sg_epochs": 5,
    "sg_window": 5,
    "sg_negatives": 5,
    "sg_lr": 0.025,
    "top_k": 100,
    "aggregate": "min",
    "n_entities": 200,
    "n_relations": 20,
}


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags given here override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="parent directory for run directories (default: runs)")
    p.add_argument("--threads", type=int, help="evaluation threads (default: all cores)")


def _add_data(p: argparse.ArgumentParser, corpus=False) -> None:
    p.add_argument("--train", help="training triples, head<TAB>relation<TAB>tail")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--anchors", help="entity<TAB>mention file")
    if corpus:
        p.add_argument("--corpus", help="aligned corpus (JSON lines)")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--lr-kg", type=float)
    p.add_argument("--kg-rounds", type=int)
    p.add_argument("--corruption", help="uniform, unif, bern or three slot weights 'h,t,r'")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--squared", type=parse_bool, metavar="{true,false}")
    p.add_argument("--k-p", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--d-max", type=int)
    p.add_argument("--word-vectors", help="word-vector file used to initialize rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointkg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("align", help="label anchored raw sentences with train relations")
    _add_common(p)
    _add_data(p)
    p.add_argument("--raw", help="raw corpus, JSON lines with text and anchors")

    p = sub.add_parser("pretrain-words", help="Skip-Gram word vectors from a plain corpus")
    _add_common(p)
    p.add_argument("--corpus", help="whitespace-tokenized text, one sentence per line")
    p.add_argument("--dim", type=int)
    p.add_argument("--sg-epochs", type=int)
    p.add_argument("--sg-window", type=int)
    p.add_argument("--sg-negatives", type=int)
    p.add_argument("--sg-lr", type=float)

    p = sub.add_parser("train-kg", help="TransE on the triples only")
    _add_common(p)
    _add_data(p)
    _add_model(p)

    p = sub.add_parser("train-joint", help="joint KG and sentence training")
    _add_common(p)
    _add_data(p, corpus=True)
    _add_model(p)
    p.add_argument("--tau", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--lr-text", type=float)
    p.add_argument("--text-rounds", type=int)
    p.add_argument("--sg-epochs", type=int, help="Skip-Gram epochs when no --word-vectors (0 skips)")
    p.add_argument("--sg-window", type=int)
    p.add_argument("--sg-negatives", type=int)
    p.add_argument("--sg-lr", type=float)

    for name, text in (("eval-entity", "Hits@10 entity prediction"), ("eval-relation", "Top-1 relation prediction")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--model", help="run directory of a training command")
        p.add_argument("--filtered", type=parse_bool, metavar="{true,false}")

    p = sub.add_parser("eval-text", help="precision/recall of sentence-only relation ranking")
    _add_common(p)
    p.add_argument("--model", help="run directory of a training command")
    p.add_argument("--corpus", help="aligned test sentences")
    p.add_argument("--top-k", type=int)
    p.add_argument("--aggregate", choices=["min", "mean"])

    p = sub.add_parser("make-synthetic", help="write the synthetic typed KG and template corpus")
    _add_common(p)
    p.add_argument("--n-entities", type=int)
    p.add_argument("--n-relations", type=int)

    p = sub.add_parser("report", help="pretty-print stored reports")
    p.add_argument("paths", nargs="+")
    return parser


def resolve_settings(parser: argparse.ArgumentParser, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags.

    Config keys of other commands are skipped; keys no command knows are an error.
    """
    subparsers = parser._subparsers._group_actions[0].choices
    known = {a.dest for p in subparsers.values() for a in p._actions}
    actions = {a.dest: a for a in subparsers[args.command]._actions if a.dest not in ("help", "config")}
    settings = {k: DEFAULTS.get(k) for k in actions}
    if args.config:
        for key, raw in read_config(args.config).items():
            if key not in known:
                raise ValueError(f"{args.config}: unknown setting '{key}'")
            if key not in actions:
                continue  # belongs to another command; one file can serve the whole pipeline
            action = actions[key]
            value = action.type(raw) if action.type else raw
            if action.choices is not None and value not in action.choices:
                raise ValueError(f"{args.config}: {key} must be one of {action.choices}")
            settings[key] = value
    for key in actions:
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    return settings


def train_config(settings: dict) -> TrainConfig:
    names = TrainConfig.field_names()
    return TrainConfig(**{k: settings.get(k, DEFAULTS[k]) for k in names})


def _require(settings: dict, *keys: str) -> None:
    for key in keys:
        if not settings.get(key):
            raise UsageError(f"--{key.replace('_', '-')} is required")


class UsageError(Exception):
    pass


def _check_inputs(settings: dict) -> dict[str, dict]:
    inputs = {}
    for key in INPUT_KEYS:
        path = settings.get(key)
        if not path:
            continue
        p = Path(path)
        if key == "model":
            files = [p / "checkpoint.npz", p / "vocab.json", p / "store.npz"]
        else:
            files = [p]
        for f in files:
            if not f.is_file():
                raise FileNotFoundError(f"no such file: {f}")
        inputs[key] = {"path": str(path), "sha256": {f.name: sha256_of(f) for f in files}}
    return inputs


def make_run_dir(base: str | Path, seed: int) -> Path:
    """A new directory ``<base>/<timestamp>-seed<seed>``; never reuses an existing one."""
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    stem = f"{time.strftime('%Y%m%d-%H%M%S')}-seed{seed}"
    for i in range(1000):
        path = base / (stem if i == 0 else f"{stem}-{i}")
        try:
            path.mkdir()
            return path
        except FileExistsError:
            continue
    raise RuntimeError(f"could not create a fresh run directory under {base}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_model(settings: dict):
    model = Path(settings["model"])
    bank, conv = load_checkpoint(model / "checkpoint.npz")
    vocab = Vocabulary.load(model / "vocab.json")
    store = TripleStore.load(model / "store.npz")
    return vocab, store, bank, conv


def _data(settings: dict, with_corpus: bool):
    files = [settings[k] for k in ("train", "valid", "test") if settings.get(k)]
    corpus = settings.get("corpus") if with_corpus else None
    vocab = build_vocabulary(files, corpus, settings.get("anchors"))
    store = TripleStore.from_files(vocab, settings["train"], settings.get("valid"), settings.get("test"))
    return vocab, store


def cmd_align(settings: dict, run: Path) -> dict:
    _require(settings, "raw", "train")
    vocab, store = _data(settings, with_corpus=False)
    sentences = read_raw_corpus(settings["raw"])
    records, stats = distant_label(sentences, store, vocab)
    write_labeled(run / "aligned.jsonl", records)
    write_anchor_file(run / "anchors.tsv", sentences)
    with open(run / "corpus.txt", "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(" ".join(s.tokens) + "\n")
    _write_json(run / "stats.json", asdict(stats))
    return {"sentences_labeled": stats.sentences_labeled, "records": stats.records}


def cmd_pretrain_words(settings: dict, run: Path) -> dict:
    _require(settings, "corpus")
    tokens, lines = read_plain_corpus(settings["corpus"])
    result = train_skipgram(
        lines,
        len(tokens),
        settings["dim"],
        settings["sg_window"],
        settings["sg_negatives"],
        settings["sg_epochs"],
        settings["sg_lr"],
        settings["seed"],
    )
    write_word_vectors(run / "vectors.txt", tokens, result.vectors)
    with open(run / "loss.tsv", "w", encoding="utf-8") as fh:
        for i, loss in enumerate(result.epoch_losses, 1):
            fh.write(f"{i}\t{float(loss)!r}\n")
    return {"words": len(tokens)}


def _train(settings: dict, run: Path, joint: bool) -> dict:
    _require(settings, "train", *(("corpus",) if joint else ()))
    config = train_config(settings)
    if not joint:
        config.text_rounds = 0
    config.validate()
    vocab, store = _data(settings, with_corpus=joint)
    bank, conv = init_params(
        vocab, config.dim, config.seed, k_p=config.k_p, window=config.window, d_max=config.d_max
    )
    corpus = load_aligned_corpus(vocab, settings["corpus"]) if joint else []
    if settings.get("word_vectors"):
        load_word_vectors(settings["word_vectors"], bank, vocab)
    elif joint and settings["sg_epochs"] > 0:
        lines, last = [], None
        for s in corpus:
            if s.tokens != last:  # records from one sentence are adjacent
                lines.append(s.tokens)
            last = s.tokens
        init_from_skipgram(
            bank,
            lines,
            settings["sg_epochs"],
            settings["sg_window"],
            settings["sg_negatives"],
            settings["sg_lr"],
            config.seed,
        )
    if joint:
        result = joint_train(config, store, corpus, bank, conv)
    else:
        result = train_transe(config, store, bank, conv)
    save_checkpoint(run / "checkpoint.npz", bank, conv)
    vocab.save(run / "vocab.json")
    store.save(run / "store.npz")
    write_loss_history(run / "loss.tsv", result.history)
    return {"kg_batches": result.kg_batches, "text_steps": result.text_steps}


def cmd_eval(settings: dict, run: Path, kind: str) -> dict:
    _require(settings, "model")
    vocab, store, bank, conv = _load_model(settings)
    if kind == "entity":
        report = entity_prediction_eval(bank, store, settings["filtered"], threads=settings["threads"])
        write_report(run / "entity_prediction.json", report)
        return {"triple_avg": report.triple_avg, "relation_avg": report.relation_avg}
    report = relation_prediction_eval(bank, store, settings["filtered"], threads=settings["threads"])
    write_report(run / "relation_prediction.json", report)
    return {"accuracy": report.overall}


def cmd_eval_text(settings: dict, run: Path) -> dict:
    _require(settings, "model", "corpus")
    vocab, store, bank, conv = _load_model(settings)
    sentences = load_aligned_corpus(vocab, settings["corpus"])
    curve = relation_classification_eval(
        bank, conv, sentences, store, settings["top_k"], aggregate=settings["aggregate"]
    )
    curve.write_csv(run / "pr_curve.csv")
    summary = {
        "candidates": curve.candidates,
        "total_correct": curve.total_correct,
        "excluded_pairs": curve.excluded_pairs,
        "relations": [vocab.relation_names()[r] for r in curve.relations],
    }
    _write_json(run / "pr_summary.json", summary)
    return {"candidates": curve.candidates, "excluded_pairs": curve.excluded_pairs}


def cmd_make_synthetic(settings: dict, run: Path) -> dict:
    data = make_synthetic(settings["seed"], settings["n_entities"], settings["n_relations"])
    write_synthetic(data, run)
    return {"train": len(data.store.train), "test": len(data.store.test), "sentences": len(data.corpus)}


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.1f}"
    return str(value)


def format_report(path: str | Path) -> str:
    path = Path(path)
    if path.suffix == ".csv":
        rows = path.read_text(encoding="utf-8").splitlines()[1:]
        points = [tuple(map(float, r.split(","))) for r in rows if r]
        lines = [f"{path.name}: {len(points)} points"]
        for recall, precision in points[:: max(1, len(points) // 10)]:
            lines.append(f"  recall {recall:.3f}  precision {precision:.3f}")
        return "\n".join(lines)
    data = json.loads(path.read_text(encoding="utf-8"))
    lines = [path.name]
    for key, value in data.items():
        if isinstance(value, dict):
            cells = "  ".join(f"{k}: {_fmt(v)}" for k, v in value.items())
            lines.append(f"  {key:<20} {cells}")
        else:
            lines.append(f"  {key:<20} {_fmt(value)}")
    return "\n".join(lines)


COMMANDS = {
    "align": cmd_align,
    "pretrain-words": cmd_pretrain_words,
    "train-kg": lambda s, r: _train(s, r, joint=False),
    "train-joint": lambda s, r: _train(s, r, joint=True),
    "eval-entity": lambda s, r: cmd_eval(s, r, "entity"),
    "eval-relation": lambda s, r: cmd_eval(s, r, "relation"),
    "eval-text": cmd_eval_text,
    "make-synthetic": cmd_make_synthetic,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "report":
            for path in args.paths:
                if not Path(path).is_file():
                    raise FileNotFoundError(f"no such file: {path}")
                print(format_report(path))
            return 0
        settings = resolve_settings(parser, args)
        inputs = _check_inputs(settings)
        run = make_run_dir(settings["out"], settings["seed"])
        manifest = {
            "command": args.command,
            "version": __version__,
            "seed": settings["seed"],
            "settings": settings,
            "inputs": inputs,
        }
        _write_json(run / "manifest.json", manifest)
        summary = COMMANDS[args.command](settings, run)
    except FileNotFoundError as exc:
        msg = str(exc) if str(exc).startswith("no such file") else f"no such file: {exc.filename}"
        print(f"jointkg: error: {msg}", file=sys.stderr)
        return 1
    except (UsageError, ValueError) as exc:
        print(f"jointkg: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    print(json.dumps({"run": str(run), **summary}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
