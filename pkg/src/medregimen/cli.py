"""Command-line front door wiring every stage of the toolkit.

Commands: ``generate``, ``split``, ``preprocess``, ``pretrain``, ``train``,
``evaluate``, ``ablate``, ``extract``. Settings are layered: built-in
defaults, then a JSON config file (``--config`` or the ``MEDREG_CONFIG``
environment variable), then ``MEDREG_<NAME>`` environment variables, then
flags — later layers win. Every run writes the resolved settings, input
content hashes, and output paths to ``<out>.manifest.json`` so a result can
be traced to exactly what produced it; manifests carry no timestamps, so
identical runs write identical bytes.

Exit codes: 0 success, 2 usage, 3 bad data or configuration values,
4 numeric divergence during training, 5 file IO. Errors print one line to
stderr of the form ``error[<code>]: <message>``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from medregimen.checkpoint import CheckpointFormatError, save_checkpoint
from medregimen.corpus import (
    Corpus,
    CorpusFormatError,
    CorpusSplit,
    load_corpus,
    save_corpus,
    split_corpus,
)
from medregimen.training import NumericalDivergenceError, TransferError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

ENV_PREFIX = "MEDREG_"
CONFIG_ENV = "MEDREG_CONFIG"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(value) -> tuple[float, ...]:
    if isinstance(value, str):
        return tuple(float(part) for part in value.split(","))
    return tuple(float(part) for part in value)


def _parse_ints(value) -> tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(part) for part in value.split(","))
    return tuple(int(part) for part in value)


class Settings:
    """Layered setting resolution with an effective-value snapshot."""

    def __init__(self, args: argparse.Namespace):
        self._args = args
        self._file = self._load_file(args)
        self.effective: dict = {}

    @staticmethod
    def _load_file(args: argparse.Namespace) -> dict:
        path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
        if not path:
            return {}
        loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
        return loaded

    def get(self, name: str, default=None, cast=None):
        value = default
        if name in self._file:
            value = self._file[name]
        env = os.environ.get(ENV_PREFIX + name.upper())
        if env is not None:
            value = env
        flag = getattr(self._args, name, None)
        if flag is not None:
            value = flag
        if cast is not None and value is not None:
            if cast is bool and isinstance(value, str):
                value = _parse_bool(value)
            elif not isinstance(value, bool) or cast is not bool:
                value = cast(value)
        self.effective[name] = value
        return value

    def file_section(self, name: str, default=None):
        value = self._file.get(name, default)
        self.effective[name] = value
        return value


def _sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out: str | Path, command: str, settings: Settings, inputs: list, outputs: list
) -> None:
    manifest = {
        "command": command,
        "config": settings.effective,
        "inputs": {
            str(p): _sha256(p) for p in inputs if p is not None and Path(p).is_file()
        },
        "outputs": [str(p) for p in outputs],
    }
    text = json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n"
    Path(str(out) + ".manifest.json").write_text(text, encoding="utf-8")


def _write_json(path: str | Path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _load_split(path: str | Path) -> CorpusSplit:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return CorpusSplit(
            train=list(raw["train"]),
            validation=list(raw["validation"]),
            test=list(raw["test"]),
            holdout=list(raw.get("holdout", [])),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorpusFormatError(f"split file {path}: {exc}") from exc


def _split_to_dict(split: CorpusSplit) -> dict:
    return {
        "train": split.train,
        "validation": split.validation,
        "test": split.test,
        "holdout": split.holdout,
    }


# ---------------------------------------------------------------------------
# Command handlers


def _cmd_generate(args: argparse.Namespace) -> int:
    from medregimen.synthesis import GenerationProfile, generate_synthetic_corpus

    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    n_transcripts = settings.get("n_transcripts", 500, int)
    overrides = settings.file_section("profile", {}) or {}
    profile = GenerationProfile(**overrides)
    corpus = generate_synthetic_corpus(seed, n_transcripts, profile)
    save_corpus(corpus, args.out)
    _write_manifest(args.out, "generate", settings, [args.config], [args.out])
    print(f"generated {len(corpus)} transcripts -> {args.out}")
    return EXIT_OK


def _cmd_split(args: argparse.Namespace) -> int:
    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    fractions = settings.get("fractions", (0.8, 0.1, 0.1, 0.0), _parse_floats)
    corpus = load_corpus(args.inp)
    split = split_corpus(corpus, seed=seed, fractions=tuple(fractions))
    _write_json(args.out, _split_to_dict(split))
    _write_manifest(args.out, "split", settings, [args.config, args.inp], [args.out])
    sizes = {part: len(split.part(part)) for part in ("train", "validation", "test", "holdout")}
    print(f"split {len(corpus)} transcripts -> {sizes}")
    return EXIT_OK


def _cmd_preprocess(args: argparse.Namespace) -> int:
    from medregimen.preprocess import (
        ENTITY_MODE,
        QA_MODE,
        BuildStats,
        build_examples,
        build_summary_examples,
        augment_by_shuffle,
        save_examples,
    )

    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    mode = settings.get("mode", QA_MODE, str)
    part = settings.get("part", "train", str)
    augment = settings.get("augment", False, bool)
    corpus = load_corpus(args.inp)
    ids = _load_split(args.split).part(part) if args.split else None

    if mode == "summary":
        examples = build_summary_examples(corpus, ids)
        with Path(args.out).open("w", encoding="utf-8") as fh:
            for ex in examples:
                record = {
                    "input_tokens": ex.input_tokens,
                    "target_tokens": ex.target_tokens,
                    "source_id": ex.source_id,
                }
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        stats = {"examples": len(examples)}
    elif mode in (QA_MODE, ENTITY_MODE):
        build_stats = BuildStats()
        examples = build_examples(corpus, ids, mode, stats=build_stats)
        if augment:
            examples = augment_by_shuffle(examples, seed=seed)
        save_examples(examples, args.out)
        stats = {"examples": len(examples), **vars(build_stats)}
    else:
        raise ValueError(f"mode must be qa, entity, or summary, got {mode!r}")

    _write_manifest(
        args.out, "preprocess", settings, [args.config, args.inp, args.split], [args.out]
    )
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def _training_knobs(settings: Settings) -> dict:
    return {
        "hidden_dim": settings.get("hidden_dim", 64, int),
        "embedding_dim": settings.get("embedding_dim", 0, int),
        "coattention_dim": settings.get("coattention_dim", 0, int),
        "vocab_threshold": settings.get("vocab_threshold", 30, int),
        "learning_rate": settings.get("learning_rate", 0.03, float),
        "embedding_dropout": settings.get("embedding_dropout", 0.1, float),
        "clip_norm": settings.get("clip_norm", 2.0, float),
        "batch_size": settings.get("batch_size", 16, int),
        "curriculum_iterations": settings.get("curriculum_iterations", 3500, int),
        "max_iterations": settings.get("max_iterations", 8000, int),
        "eval_every": settings.get("eval_every", 500, int),
        "patience": settings.get("patience", 14, int),
    }


def _cmd_train(args: argparse.Namespace) -> int:
    from medregimen.estimators import MedicationRegimenExtractor, prepare_training_examples

    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    variant = settings.get("model", "qa", str)
    embedding = settings.get("embedding", "lookup", str)
    knobs = _training_knobs(settings)
    pretrained = settings.get("pretrained_encoder", None, str)
    store = settings.get("vector_store", None, str)
    augment = settings.get("augment", True, bool)

    corpus = load_corpus(args.inp)
    split = _load_split(args.split)
    train_ex = prepare_training_examples(corpus, split.train, variant, augment=augment, seed=seed)
    val_ex = prepare_training_examples(corpus, split.validation, variant)

    estimator = MedicationRegimenExtractor(
        variant=variant,
        embedding=embedding,
        seed=seed,
        vector_store=store,
        pretrained_encoder=pretrained,
        **knobs,
    )
    estimator.fit(train_ex, validation=val_ex or None)
    estimator.save(args.out)
    report_path = str(args.out) + ".report.json"
    _write_json(report_path, [report.to_dict() for report in estimator.train_reports_])
    _write_manifest(
        args.out,
        "train",
        settings,
        [args.config, args.inp, args.split, pretrained, store],
        [args.out, report_path],
    )
    best = estimator.train_reports_[-1]
    print(
        f"trained {variant} on {len(train_ex)} examples; "
        f"best iteration {best.best_iteration} score {best.best_score:.4f} -> {args.out}"
    )
    return EXIT_OK


def _cmd_pretrain(args: argparse.Namespace) -> int:
    from medregimen.pgnet import ModelConfig, build_model
    from medregimen.preprocess import build_summary_examples, build_vocabulary
    from medregimen.training import TrainConfig, pretrain_summarization

    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    embedding = settings.get("embedding", "lookup", str)
    knobs = _training_knobs(settings)
    store = settings.get("vector_store", None, str)

    corpus = load_corpus(args.inp)
    split = _load_split(args.split)
    train_ex = build_summary_examples(corpus, split.train)
    val_ex = build_summary_examples(corpus, split.validation)
    if not train_ex:
        raise CorpusFormatError("no summary examples in the training split")
    vocab = build_vocabulary(train_ex, threshold=knobs["vocab_threshold"])

    config = ModelConfig(
        variant="summarizer",
        vocab_size=len(vocab),
        hidden_dim=knobs["hidden_dim"],
        embedding_dim=knobs["embedding_dim"],
        coattention_dim=knobs["coattention_dim"],
        embedding=embedding,
    )
    from medregimen.embeddings import VectorStore

    vector_store = VectorStore.load(store) if store else None
    model = build_model(config, vocab, vector_store=vector_store, seed=seed)
    report = pretrain_summarization(
        model,
        train_ex,
        val_ex or None,
        TrainConfig(
            learning_rate=knobs["learning_rate"],
            embedding_dropout=knobs["embedding_dropout"],
            clip_norm=knobs["clip_norm"],
            batch_size=knobs["batch_size"],
            max_iterations=knobs["max_iterations"],
            eval_every=knobs["eval_every"],
            patience=knobs["patience"],
            seed=seed,
        ),
    )
    save_checkpoint(args.out, model)
    report_path = str(args.out) + ".report.json"
    _write_json(report_path, report.to_dict())
    _write_manifest(
        args.out,
        "pretrain",
        settings,
        [args.config, args.inp, args.split, store],
        [args.out, report_path],
    )
    print(
        f"pretrained on {len(train_ex)} summary examples; "
        f"best iteration {report.best_iteration} -> {args.out}"
    )
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    from medregimen.estimators import MedicationRegimenExtractor, prepare_training_examples
    from medregimen.evaluation import (
        NearestNumberBaseline,
        RandomTopThreeBaseline,
        evaluate_model,
    )

    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    part = settings.get("part", "test", str)
    store = settings.get("vector_store", None, str)

    corpus = load_corpus(args.inp)
    split = _load_split(args.split)
    estimator = MedicationRegimenExtractor.load(args.model_path, vector_store=store)
    examples = prepare_training_examples(corpus, split.part(part), estimator.variant)
    if not examples:
        raise CorpusFormatError(f"no examples in split part {part!r}")

    report = evaluate_model(estimator, examples)
    payload = report.to_dict()
    payload["baselines"] = {
        "nearest_number": evaluate_model(NearestNumberBaseline(), examples).to_dict()["overall"],
        "random_top3": evaluate_model(RandomTopThreeBaseline(seed=seed), examples).to_dict()[
            "overall"
        ],
    }
    _write_json(args.out, payload)
    _write_manifest(
        args.out,
        "evaluate",
        settings,
        [args.config, args.inp, args.split, args.model_path],
        [args.out],
    )
    overall = report.overall
    print(
        f"evaluated {len(examples)} examples: "
        f"dosage EM {overall['dosage'].exact:.4f} "
        f"frequency F1 {overall['frequency'].f1:.4f} -> {args.out}"
    )
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    from medregimen.evaluation import ablate_training_size

    settings = Settings(args)
    sizes = settings.get("sizes", (50, 100), _parse_ints)
    seeds = settings.get("seeds", (0,), _parse_ints)
    variant = settings.get("model", "qa", str)
    embedding = settings.get("embedding", "lookup", str)
    pretrained = settings.get("pretrained_encoder", None, str)
    knobs = _training_knobs(settings)

    corpus = load_corpus(args.inp)
    split = _load_split(args.split)
    rows = ablate_training_size(
        corpus,
        split,
        sizes=list(sizes),
        estimator_params={"variant": variant, "embedding": embedding, **knobs},
        seeds=tuple(seeds),
        pretrained_encoder=pretrained,
    )
    _write_json(args.out, rows)
    _write_manifest(
        args.out,
        "ablate",
        settings,
        [args.config, args.inp, args.split, pretrained],
        [args.out],
    )
    print(f"ablation over sizes {list(sizes)} x seeds {list(seeds)} -> {args.out}")
    return EXIT_OK


def _cmd_extract(args: argparse.Namespace) -> int:
    from medregimen.estimators import MedicationRegimenExtractor
    from medregimen.pipeline import NoiseConfig, extract_document, simulate_asr

    settings = Settings(args)
    seed = settings.get("seed", 0, int)
    store = settings.get("vector_store", None, str)
    substitution = settings.get("noise_substitution", 0.0, float)
    deletion = settings.get("noise_deletion", 0.0, float)

    corpus = load_corpus(args.inp)
    estimator = MedicationRegimenExtractor.load(args.model_path, vector_store=store)
    noise = None
    if substitution > 0.0 or deletion > 0.0:
        noise = NoiseConfig(substitution_rate=substitution, deletion_rate=deletion)

    count = 0
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for transcript in corpus:
            if noise is not None:
                transcript = simulate_asr(transcript, noise, seed=seed)
            for result in extract_document(transcript, estimator):
                fh.write(
                    json.dumps(result.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
                )
                count += 1
    _write_manifest(
        args.out,
        "extract",
        settings,
        [args.config, args.inp, args.model_path],
        [args.out],
    )
    print(f"extracted {count} results from {len(corpus)} transcripts -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON settings file (or set MEDREG_CONFIG)")
    parser.add_argument("--seed", type=int, help="master random seed")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--embedding", choices=("lookup", "store", "pseudo"))
    parser.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    parser.add_argument("--embedding-dim", dest="embedding_dim", type=int)
    parser.add_argument("--coattention-dim", dest="coattention_dim", type=int)
    parser.add_argument("--vocab-threshold", dest="vocab_threshold", type=int)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--embedding-dropout", dest="embedding_dropout", type=float)
    parser.add_argument("--clip-norm", dest="clip_norm", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--curriculum-iterations", dest="curriculum_iterations", type=int)
    parser.add_argument("--max-iterations", dest="max_iterations", type=int)
    parser.add_argument("--eval-every", dest="eval_every", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--vector-store", dest="vector_store", help="vector store file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medregimen",
        description="Medication regimen extraction toolkit",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("generate", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--n-transcripts", dest="n_transcripts", type=int)
    p.add_argument("--out", required=True, help="corpus file to write")
    p.set_defaults(handler=_cmd_generate)

    p = sub.add_parser("split", help="partition a corpus into parts")
    _add_common(p)
    p.add_argument("--in", dest="inp", required=True, help="corpus file")
    p.add_argument("--fractions", help="train,validation,test,holdout")
    p.add_argument("--out", required=True, help="split file to write")
    p.set_defaults(handler=_cmd_split)

    p = sub.add_parser("preprocess", help="build example files from a corpus")
    _add_common(p)
    p.add_argument("--in", dest="inp", required=True, help="corpus file")
    p.add_argument("--split", help="split file; omit to use the whole corpus")
    p.add_argument("--part", choices=("train", "validation", "test", "holdout"))
    p.add_argument("--mode", choices=("qa", "entity", "summary"))
    p.add_argument("--augment", action="store_const", const=True, default=None)
    p.add_argument("--out", required=True, help="examples file to write")
    p.set_defaults(handler=_cmd_preprocess)

    p = sub.add_parser("pretrain", help="pretrain a summarization encoder")
    _add_common(p)
    _add_training_flags(p)
    p.add_argument("--in", dest="inp", required=True, help="corpus file")
    p.add_argument("--split", required=True, help="split file")
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.set_defaults(handler=_cmd_pretrain)

    p = sub.add_parser("train", help="train an extraction model")
    _add_common(p)
    _add_training_flags(p)
    p.add_argument("--model", choices=("qa", "md"))
    p.add_argument(
        "--pretrained-encoder", dest="pretrained_encoder", help="summarizer checkpoint"
    )
    p.add_argument(
        "--no-augment", dest="augment", action="store_const", const=False, default=None
    )
    p.add_argument("--in", dest="inp", required=True, help="corpus file")
    p.add_argument("--split", required=True, help="split file")
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("evaluate", help="score a model on a split part")
    _add_common(p)
    p.add_argument("--in", dest="inp", required=True, help="corpus file")
    p.add_argument("--split", required=True, help="split file")
    p.add_argument("--part", choices=("train", "validation", "test", "holdout"))
    p.add_argument("--model-path", dest="model_path", required=True)
    p.add_argument("--vector-store", dest="vector_store")
    p.add_argument("--out", required=True, help="report file to write")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("ablate", help="training-size ablation")
    _add_common(p)
    _add_training_flags(p)
    p.add_argument("--model", choices=("qa", "md"))
    p.add_argument("--sizes", help="comma-separated training sizes")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument(
        "--pretrained-encoder", dest="pretrained_encoder", help="summarizer checkpoint"
    )
    p.add_argument("--in", dest="inp", required=True, help="corpus file")
    p.add_argument("--split", required=True, help="split file")
    p.add_argument("--out", required=True, help="rows file to write")
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("extract", help="end-to-end extraction from transcripts")
    _add_common(p)
    p.add_argument("--in", dest="inp", required=True, help="transcript corpus file")
    p.add_argument("--model-path", dest="model_path", required=True)
    p.add_argument("--vector-store", dest="vector_store")
    p.add_argument("--noise-substitution", dest="noise_substitution", type=float)
    p.add_argument("--noise-deletion", dest="noise_deletion", type=float)
    p.add_argument("--out", required=True, help="results file to write")
    p.set_defaults(handler=_cmd_extract)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if not hasattr(args, "handler"):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.handler(args)
    except NumericalDivergenceError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (CorpusFormatError, CheckpointFormatError, TransferError) as exc:
        return _fail(EXIT_DATA, exc)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        return _fail(EXIT_IO, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_DATA, exc)


def _fail(code: int, exc: BaseException) -> int:
    message = str(exc) or type(exc).__name__
    print(f"error[{code}]: {message}", file=sys.stderr)
    return code


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
