"""Command-line front end.

Every subcommand reads a JSON config (``--config``) merged over defaults;
command-line flags override config keys, and ``--set a.b=value`` overrides
anything. Exit codes: 0 success, 1 validation failures, 2 config or I/O
errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import random
import sys
from pathlib import Path

from . import alignment as al
from .corpus_io import (
    Example,
    FormatError,
    TsvColumns,
    read_dataset,
    tokenization_match_stats,
    write_dataset,
)
from .evaluation import aggregate, evaluate
from .parse_tree import MalformedParse, Utterance
from .tap import LexiconPosTagger, TapConfig, postprocess_utterance, run_tap
from .taf import (
    EchoFiller,
    FillerInstance,
    FillerTemplate,
    FillerUnavailable,
    FillerVerdict,
    MissingTranslation,
    ReferenceFiller,
    ReplayFiller,
    assemble_silver,
    build_filler_train,
    build_infer_batch,
    error_report,
    fill_many,
    validate_filler_output,
)

log = logging.getLogger("tafkit")

DEFAULTS = {
    "dataset": None,
    "dataset_b": None,
    "format": "canonical",
    "strict": True,
    "columns": None,
    "locale": "en",
    "split": "train",
    "translations": None,
    "parallel": None,
    "model": None,
    "output": None,
    "report_out": None,
    "gold": None,
    "pred": [],
    "instances": None,
    "outputs": None,
    "verdicts": None,
    "seed": 0,
    "shuffle": False,
    "aligner": {"ibm1_iterations": 5, "hmm_iterations": 5, "window": 5, "p_null": 0.2, "mode": "hmm"},
    "tap": {
        "check_source_tokenization": True,
        "whitespace_only": True,
        "check_pos_tokenization": True,
        "pos_trim": True,
        "exempt_labels": ["DATE_TIME"],
    },
    "pos_lexicon": None,
    "postprocess": {},
    "filler": {
        "backend": "reference",
        "separator": " | ",
        "signature_first": False,
        "tokenized": True,
        "batch_size": 64,
    },
    "validation": {"form": "NFC", "lowercase": False},
    "assemble": {"policy": "keep-all-parseable"},
    "eval": {"average_languages": None, "slots": True, "form": "NFC", "lowercase": False},
}

# flag name -> config key
PATH_FLAGS = (
    "dataset",
    "dataset_b",
    "format",
    "translations",
    "parallel",
    "model",
    "output",
    "report_out",
    "gold",
    "instances",
    "outputs",
    "verdicts",
)


class ConfigError(Exception):
    pass


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _set_key(cfg: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not a section")
    node[keys[-1]] = value


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            cfg = _merge(cfg, json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
    for key in PATH_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "pred", None):
        cfg["pred"] = list(args.pred)
    if getattr(args, "backend", None):
        cfg["filler"]["backend"] = args.backend
    if getattr(args, "lenient", False):
        cfg["strict"] = False
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        _set_key(cfg, key, value)
    return cfg


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join(missing))


def _read(cfg: dict, path, fmt: str | None = None, errors: list | None = None) -> list[Example]:
    columns = TsvColumns.from_dict(cfg["columns"]) if cfg.get("columns") else None
    examples = list(
        read_dataset(
            path,
            fmt or cfg["format"],
            strict=cfg["strict"] if errors is None else False,
            errors=errors,
            columns=columns,
            locale=cfg["locale"],
            split=cfg["split"],
        )
    )
    if cfg.get("shuffle"):
        random.Random(cfg["seed"]).shuffle(examples)
    return examples


def _translations(cfg: dict) -> dict:
    out = {}
    for ex in read_dataset(cfg["translations"], "canonical", strict=cfg["strict"]):
        out[ex.id] = postprocess_utterance(ex.utterance, cfg["postprocess"].get(ex.language))
    return out


def _write_jsonl(path, records) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def _read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def _report(cfg: dict, text: str, record: dict) -> None:
    print(text)
    if cfg.get("report_out"):
        Path(cfg["report_out"]).write_text(
            json.dumps(record, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


def _template(cfg: dict) -> FillerTemplate:
    f = cfg["filler"]
    return FillerTemplate(f["separator"], bool(f["signature_first"]))


def _corpus(cfg: dict) -> al.ParallelCorpus:
    if cfg.get("parallel"):
        return al.ParallelCorpus.from_file(cfg["parallel"])
    _need(cfg, "dataset", "translations")
    translations = _translations(cfg)
    pairs = []
    for ex in _read(cfg, cfg["dataset"]):
        tr = translations.get(ex.id)
        if tr is None:
            continue
        src = ex.utterance.tokens or ex.utterance.raw.split()
        tgt = tr.tokens if tr.tokens is not None else tr.raw.split()
        if src and tgt:
            pairs.append((src, tgt))
    return al.ParallelCorpus(pairs)


# ---------------------------------------------------------------- commands


def cmd_validate(cfg: dict) -> int:
    _need(cfg, "dataset")
    errors: list = []
    problems = []
    seen: dict[str, int] = {}
    n = 0
    for ex in _read(cfg, cfg["dataset"], errors=errors):
        n += 1
        if ex.id in seen:
            problems.append(f"duplicate id {ex.id!r}")
        seen[ex.id] = n
        if not ex.utterance.is_consistent():
            problems.append(f"id {ex.id!r}: tokens disagree with utterance text")
        if ex.unanchored and not ex.meta.get("unanchored"):
            problems.append(f"id {ex.id!r}: slot tokens not found in utterance tokens")
    lines = [str(e) for e in errors] + problems
    total = len(errors) + len(problems)
    text = "\n".join(lines + [f"{n} records, {total} errors"])
    _report(
        cfg,
        text,
        {"records": n, "errors": total, "format_errors": [str(e) for e in errors], "invariant_violations": problems},
    )
    return 1 if total else 0


def cmd_align_train(cfg: dict) -> int:
    _need(cfg, "output")
    a = cfg["aligner"]
    corpus = _corpus(cfg)
    model = al.train_ibm1(corpus, int(a["ibm1_iterations"]))
    lls = {"ibm1": model.log_likelihoods}
    if int(a["hmm_iterations"]) > 0:
        model = al.train_hmm(corpus, int(a["hmm_iterations"]), model, int(a["window"]), float(a["p_null"]))
        lls["hmm"] = model.log_likelihoods
    model.save(cfg["output"])
    text = f"trained on {len(corpus)} pairs\n" + "\n".join(
        f"{name} loglik: " + " ".join(f"{x:.4f}" for x in v) for name, v in lls.items()
    )
    _report(cfg, text, {"pairs": len(corpus), "log_likelihoods": lls})
    return 0


def cmd_align_apply(cfg: dict) -> int:
    _need(cfg, "model", "output")
    model = al.AlignmentModel.load(cfg["model"])
    mode = cfg["aligner"]["mode"] if model.has_hmm else "model1"
    corpus = _corpus(cfg)
    with open(cfg["output"], "w", encoding="utf-8", newline="\n") as f:
        for src, tgt in corpus.pairs:
            f.write(al.format_links(al.viterbi_align(model, src, tgt, mode)) + "\n")
    _report(cfg, f"aligned {len(corpus)} pairs ({mode})", {"pairs": len(corpus), "mode": mode})
    return 0


def cmd_tap(cfg: dict) -> int:
    _need(cfg, "dataset", "translations", "model", "output")
    model = al.AlignmentModel.load(cfg["model"])
    tap_cfg = TapConfig.from_dict(cfg["tap"])
    tap_cfg.mode = cfg["aligner"]["mode"] if model.has_hmm else "model1"
    lexicon = None
    if cfg.get("pos_lexicon"):
        lexicon = json.loads(Path(cfg["pos_lexicon"]).read_text(encoding="utf-8"))
    silver, report = run_tap(_read(cfg, cfg["dataset"]), _translations(cfg), model, LexiconPosTagger(lexicon), tap_cfg)
    write_dataset(silver, cfg["output"])
    _report(cfg, report.to_table(), report.to_record())
    return 0


def cmd_taf_build(cfg: dict) -> int:
    _need(cfg, "dataset", "output")
    template = _template(cfg)
    tokenized = bool(cfg["filler"]["tokenized"])
    examples = [ex for ex in _read(cfg, cfg["dataset"]) if ex.parse is not None]
    missing: list = []
    if cfg.get("translations"):
        instances = build_infer_batch(
            examples, _translations(cfg), template, tokenized, strict=cfg["strict"], missing=missing
        )
        kind = "inference"
    else:
        instances = [build_filler_train(ex, template, tokenized) for ex in examples]
        kind = "training"
    _write_jsonl(cfg["output"], (inst.to_record() for inst in instances))
    bad = 0
    if kind == "training":
        bad = sum(not validate_filler_output(i.target, i).ok for i in instances)
    text = f"{len(instances)} {kind} instances"
    if missing:
        text += f", {len(missing)} missing translations"
    if kind == "training":
        text += f", {bad} not self-consistent"
    _report(cfg, text, {"instances": len(instances), "kind": kind, "missing": missing, "inconsistent": bad})
    return 1 if bad else 0


def _filler(cfg: dict):
    backend = cfg["filler"]["backend"]
    if backend == "echo":
        return EchoFiller()
    if backend.startswith("replay:"):
        return ReplayFiller.from_file(backend.split(":", 1)[1])
    if backend == "reference":
        _need(cfg, "model", "dataset")
        model = al.AlignmentModel.load(cfg["model"])
        sources = {ex.id: ex for ex in _read(cfg, cfg["dataset"])}
        return ReferenceFiller(model, sources, cfg["aligner"]["mode"])
    raise ConfigError(f"unknown filler backend {backend!r}")


def _instances(cfg: dict) -> list[FillerInstance]:
    template = _template(cfg)
    return [FillerInstance.from_record(r, template) for r in _read_jsonl(cfg["instances"])]


def cmd_taf_fill(cfg: dict) -> int:
    _need(cfg, "instances", "output")
    instances = _instances(cfg)
    outputs = fill_many(instances, _filler(cfg), int(cfg["filler"]["batch_size"]))
    _write_jsonl(
        cfg["output"],
        ({"id": i.id, "language": i.language, "input": i.input, "output": o} for i, o in zip(instances, outputs)),
    )
    _report(cfg, f"filled {len(outputs)} instances", {"instances": len(outputs)})
    return 0


def _verdicts(cfg: dict, records: list[dict]) -> list[FillerVerdict]:
    template = _template(cfg)
    v = cfg["validation"]
    return [
        validate_filler_output(r["output"], FillerInstance.from_record(r, template), v["form"], v["lowercase"])
        for r in records
    ]


def cmd_taf_validate(cfg: dict) -> int:
    _need(cfg, "outputs")
    records = _read_jsonl(cfg["outputs"])
    verdicts = _verdicts(cfg, records)
    if cfg.get("output"):
        _write_jsonl(
            cfg["output"],
            (
                {"id": r.get("id", ""), "language": r.get("language", ""), "verdict": v.kind, "details": v.details}
                for r, v in zip(records, verdicts)
            ),
        )
    report = error_report((r.get("language", ""), v) for r, v in zip(records, verdicts))
    _report(cfg, report.to_table(), report.to_record())
    return 0


def cmd_taf_assemble(cfg: dict) -> int:
    _need(cfg, "outputs", "output")
    records = _read_jsonl(cfg["outputs"])
    verdicts = _verdicts(cfg, records)
    translations = _translations(cfg) if cfg.get("translations") else {}
    template = _template(cfg)
    policy = cfg["assemble"]["policy"]
    silver = []
    for r, v in zip(records, verdicts):
        utt = translations.get(r.get("id"))
        if utt is None:
            text = template.split(r["input"])[0]
            utt = Utterance(text, text.split(), r.get("language", ""))
        ex = assemble_silver(utt, r["output"], v, policy, example_id=str(r.get("id", "")))
        if ex is not None:
            silver.append(ex)
    write_dataset(silver, cfg["output"])
    dropped = len(records) - len(silver)
    _report(
        cfg,
        f"{len(silver)} silver examples, {dropped} dropped ({policy})",
        {"emitted": len(silver), "dropped": dropped, "policy": policy},
    )
    return 0


def cmd_eval(cfg: dict) -> int:
    _need(cfg, "gold", "pred")
    e = cfg["eval"]
    golds = _read(cfg, cfg["gold"])
    reports = [
        evaluate(golds, _read(cfg, p), e["average_languages"], bool(e["slots"]), e["form"], e["lowercase"])
        for p in cfg["pred"]
    ]
    report = reports[0] if len(reports) == 1 else aggregate(reports, e["average_languages"] or reports[0].average_languages)
    _report(cfg, report.to_table(), report.to_record())
    return 0


def cmd_stats_tokenization(cfg: dict) -> int:
    _need(cfg, "dataset", "dataset_b")
    stats = tokenization_match_stats(_read(cfg, cfg["dataset"]), _read(cfg, cfg["dataset_b"]), strict=cfg["strict"])
    _report(cfg, stats.to_table(), stats.to_record())
    return 0


def cmd_analyze_errors(cfg: dict) -> int:
    if cfg.get("verdicts"):
        pairs = [
            (r.get("language", ""), FillerVerdict(r["verdict"], r.get("details", [])))
            for r in _read_jsonl(cfg["verdicts"])
        ]
    else:
        _need(cfg, "outputs")
        records = _read_jsonl(cfg["outputs"])
        pairs = [(r.get("language", ""), v) for r, v in zip(records, _verdicts(cfg, records))]
    report = error_report(pairs)
    _report(cfg, report.to_table(), report.to_record())
    return 0


COMMANDS = {
    "validate": (cmd_validate, "check a dataset for malformed records and invariant violations"),
    "align-train": (cmd_align_train, "train IBM Model 1 (+ HMM) on a parallel corpus"),
    "align-apply": (cmd_align_apply, "write Viterbi alignment links for a parallel corpus"),
    "tap": (cmd_tap, "project annotations onto translations (TAP baseline)"),
    "taf-build": (cmd_taf_build, "build filler training or inference instances"),
    "taf-fill": (cmd_taf_fill, "run a filler backend over instances"),
    "taf-validate": (cmd_taf_validate, "classify filler outputs and report errors"),
    "taf-assemble": (cmd_taf_assemble, "assemble silver data from filler outputs"),
    "eval": (cmd_eval, "exact match, intent accuracy and slot F1"),
    "stats-tokenization": (cmd_stats_tokenization, "per-language tokenization agreement"),
    "analyze-errors": (cmd_analyze_errors, "error report from verdicts or filler outputs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tafkit", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
        p.add_argument("--report-out", dest="report_out", help="write the report as JSON")
        p.add_argument("--lenient", action="store_true", help="skip bad records instead of failing")
        p.add_argument("--output", "-o")
        p.add_argument("--dataset")
        p.add_argument("--format", choices=("canonical", "conll-bio", "mtop-tsv"))
        p.add_argument("--translations")
        p.add_argument("--model")
        if name in ("align-train", "align-apply"):
            p.add_argument("--parallel", help="source<TAB>target token lines")
        if name == "stats-tokenization":
            p.add_argument("--dataset-b", dest="dataset_b")
        if name == "eval":
            p.add_argument("--gold")
            p.add_argument("--pred", action="append", help="predictions; repeat for several runs")
        if name in ("taf-fill",):
            p.add_argument("--instances")
            p.add_argument("--backend", help="reference | echo | replay:<file>")
        if name in ("taf-validate", "taf-assemble", "analyze-errors"):
            p.add_argument("--outputs")
        if name == "analyze-errors":
            p.add_argument("--verdicts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.dry_run:
            print(json.dumps(cfg, indent=2, sort_keys=True, ensure_ascii=False))
            return 0
        random.seed(cfg["seed"])
        return COMMANDS[args.command][0](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, FormatError, MalformedParse, MissingTranslation, FillerUnavailable, al.EmptyCorpus, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
