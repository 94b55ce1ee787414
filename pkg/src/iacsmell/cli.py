"""Single entrypoint for the whole study pipeline.

Every artifact-writing subcommand also writes a provenance JSON next to its
output (input content hashes, effective configuration, seed, tool version).
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 data validation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
import time
from pathlib import Path

from . import __version__
from .ablate import (
    ANSIBLE_CLEANUP_PROMPT,
    PUPPET_REDUCTION_PROMPT,
    AblationRule,
    QuarantineReport,
    YamlParseError,
    heuristic_mark,
    llm_clean,
    reduce_puppet_context,
    strip_ansible_nl,
)
from .corpus import Snippet, SplitSpec, load_jsonl, save_jsonl, stratified_split, validate
from .errors import ConfigError, DataError, IacsmellError
from .evaluate import (
    BaselineModel,
    MetricsReport,
    PipelineSpec,
    confusion,
    cross_validate,
    load_predictions,
    render_table,
    save_predictions,
    train_baseline,
)
from .forest import ForestConfig
from .llm_bench import (
    ANSIBLE_DETECT_PROMPT,
    PUPPET_DETECT_PROMPT,
    ChatClient,
    ClientConfig,
    PromptTemplate,
    benchmark,
    save_verdicts,
)
from .normalize import DEFAULT_FILTER_CHARS, normalize_text

DETECT_TEMPLATES = {
    "ansible": ANSIBLE_DETECT_PROMPT,
    "puppet": PUPPET_DETECT_PROMPT,
}
CLEANUP_TEMPLATES = {
    "strip-nl": ANSIBLE_CLEANUP_PROMPT,
    "reduce-context": PUPPET_REDUCTION_PROMPT,
}

_CONFIG_LINE = re.compile(r"^\s*([A-Za-z_][\w-]*)\s*=\s*(.+?)\s*$")


def read_config(path: str | Path) -> dict:
    """Flat TOML-style key = value file: strings in quotes, numbers,
    true/false, and [a, b] lists. Flags always win over config values."""
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = _CONFIG_LINE.match(line)
        if not match:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = match.group(1).replace("-", "_"), match.group(2)
        values[key] = _parse_config_value(raw, f"{path}:{lineno}")
    return values


def _parse_config_value(raw: str, where: str):
    if raw.startswith(("'", '"')):
        closing = raw.find(raw[0], 1)
        if closing > 0:
            return raw[1:closing]
    if not raw.startswith("["):
        raw = raw.split("#", 1)[0].strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        return [_parse_config_value(part.strip(), where) for part in inner.split(",")]
    if (raw.startswith('"') and raw.endswith('"')) or (
        raw.startswith("'") and raw.endswith("'")
    ):
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {raw!r}") from None


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_provenance(output: Path, command: str, args: dict, inputs: list[Path]) -> None:
    payload = {
        "command": command,
        "tool_version": __version__,
        "config": {
            k: v
            for k, v in args.items()
            if not k.startswith("_") and not callable(v)
        },
        "inputs": {str(p): _sha256(p) for p in inputs if p.exists()},
        "created_unix": time.time(),
    }
    path = output.with_name(output.name + ".provenance.json")
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _forest_config(args: argparse.Namespace) -> ForestConfig:
    features_per_split: int | str = args.features_per_split
    if features_per_split != "sqrt":
        features_per_split = int(features_per_split)
    return ForestConfig(
        n_trees=args.trees,
        max_depth=args.max_depth,
        min_samples_split=args.min_samples_split,
        features_per_split=features_per_split,
        bootstrap=not args.no_bootstrap,
        seed=args.seed,
    )


def _add_forest_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trees", type=int, default=100)
    parser.add_argument("--max-depth", type=int, default=None)
    parser.add_argument("--min-samples-split", type=int, default=2)
    parser.add_argument("--features-per-split", default="sqrt")
    parser.add_argument("--no-bootstrap", action="store_true")


def _add_client_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--endpoint")
    parser.add_argument("--model", dest="model_name")
    parser.add_argument("--auth-env", default="IACSMELL_API_TOKEN")
    parser.add_argument("--cache-dir", default=".llm-cache")
    parser.add_argument("--max-retries", type=int, default=3)
    parser.add_argument("--timeout", type=float, default=60.0)
    parser.add_argument("--max-in-flight", type=int, default=4)
    parser.add_argument("--temperature", type=float, default=0.0)


def _client_from_args(args: argparse.Namespace) -> ChatClient:
    if not args.endpoint or not args.model_name:
        raise ConfigError("--endpoint and --model are required (flags or config file)")
    return ChatClient(
        ClientConfig(
            endpoint=args.endpoint,
            model=args.model_name,
            auth_env=args.auth_env,
            max_retries=args.max_retries,
            timeout=args.timeout,
            max_in_flight=args.max_in_flight,
            temperature=args.temperature,
            cache_dir=args.cache_dir,
        )
    )


def cmd_validate(args: argparse.Namespace) -> int:
    dataset = load_jsonl(args.dataset)
    report = validate(dataset, name=Path(args.dataset).stem, provenance=str(args.dataset))
    document = report.manifest.to_json()
    document["violations"] = report.violations
    text = json.dumps(document, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_provenance(Path(args.out), "validate", vars(args), [Path(args.dataset)])
    print(text)
    return 0 if report.ok else 3


def cmd_normalize(args: argparse.Namespace) -> int:
    dataset = load_jsonl(args.dataset)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as handle:
        for snippet in dataset:
            record = snippet.to_record()
            record["normalized_text"] = normalize_text(snippet.body, args.filter_chars)
            record["normalized_empty"] = record["normalized_text"] == ""
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    write_provenance(out, "normalize", vars(args), [Path(args.dataset)])
    print(f"normalized {len(dataset)} snippets -> {out}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    dataset = load_jsonl(args.dataset)
    rule = AblationRule(
        mode=args.mode.replace("-", "_"),
        nl_keys=tuple(k for k in args.nl_keys.split(",") if k),
        before=args.before,
        after=args.after,
    )
    quarantine = QuarantineReport()
    client = _client_from_args(args) if args.llm else None
    template = (
        PromptTemplate(tool="ansible", text=CLEANUP_TEMPLATES[args.mode])
        if args.llm
        else None
    )
    kept: list[Snippet] = []
    for snippet in dataset:
        try:
            if client is not None:
                result = llm_clean(snippet.body, template, client)
                body = result.text
            elif args.mode == "strip-nl":
                body = strip_ansible_nl(snippet.body, rule)
            else:
                if not snippet.misconfig_lines and args.heuristic_mark:
                    snippet.misconfig_lines = heuristic_mark(snippet.body) or None
                body = reduce_puppet_context(snippet, rule)
        except (YamlParseError, DataError) as exc:
            quarantine.add(snippet.id, str(exc))
            continue
        if not body.strip():
            quarantine.add(snippet.id, "empty body after ablation")
            continue
        kept.append(
            Snippet(
                id=snippet.id,
                tool=snippet.tool,
                body=body,
                label=snippet.label,
                pair_id=snippet.pair_id,
            )
        )
    out = Path(args.out)
    save_jsonl(kept, out)
    write_provenance(out, "ablate", vars(args), [Path(args.dataset)])
    if args.quarantine:
        Path(args.quarantine).write_text(
            json.dumps(quarantine.to_json(), indent=2), encoding="utf-8"
        )
    print(
        f"ablated {len(kept)} snippets -> {out}"
        + (f" ({len(quarantine.entries)} quarantined)" if quarantine.entries else "")
    )
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    dataset = load_jsonl(args.dataset)
    try:
        train_f, val_f, test_f = (float(x) for x in args.ratios.split(","))
    except ValueError as exc:
        raise ConfigError(f"--ratios expects three comma-separated floats: {exc}") from exc
    spec = SplitSpec(
        train_fraction=train_f, val_fraction=val_f, test_fraction=test_f, seed=args.seed
    )
    train, val, test = stratified_split(dataset, spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sizes = {}
    for name, part in (("train", train), ("val", val), ("test", test)):
        path = out_dir / f"{name}.jsonl"
        save_jsonl(part, path)
        sizes[name] = len(part)
    manifest_path = out_dir / "split_manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "sizes": sizes,
                "seed": args.seed,
                "ratios": [train_f, val_f, test_f],
                "source": str(args.dataset),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    write_provenance(manifest_path, "split", vars(args), [Path(args.dataset)])
    print(f"split sizes: train={sizes['train']} val={sizes['val']} test={sizes['test']}")
    return 0


def cmd_train_baseline(args: argparse.Namespace) -> int:
    dataset = load_jsonl(args.dataset)
    pipeline = PipelineSpec(
        featurizer=args.features,
        forest=_forest_config(args),
        min_df=args.min_df,
        filter_set=args.filter_chars,
    )
    model = train_baseline(dataset, pipeline)
    out = Path(args.model_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    write_provenance(out, "train-baseline", vars(args), [Path(args.dataset)])
    print(f"trained {args.features}+forest on {len(dataset)} snippets -> {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = load_jsonl(args.dataset)
    truth = [(s.id, s.label) for s in dataset]
    if args.cross_validate:
        pipeline = PipelineSpec(
            featurizer=args.features,
            forest=_forest_config(args),
            min_df=args.min_df,
            filter_set=args.filter_chars,
        )
        report = cross_validate(pipeline, dataset, k=args.k, seed=args.seed)
        report.provenance["evaluation"] = "cv-median"
        name = f"{args.features}+forest cv"
    elif args.model:
        model = BaselineModel.load(args.model)
        records = model.predict(dataset)
        if args.predictions_out:
            save_predictions(records, args.predictions_out)
        matrix = confusion([(r["id"], r["predicted_label"]) for r in records], truth)
        report = MetricsReport.from_matrix(
            matrix, provenance={"evaluation": "test-set", "model": str(args.model)}
        )
        name = f"{model.featurizer}+forest"
    elif args.predictions:
        pairs = load_predictions(args.predictions)
        matrix = confusion(pairs, truth)
        report = MetricsReport.from_matrix(
            matrix,
            provenance={"evaluation": "test-set", "predictions": str(args.predictions)},
        )
        name = Path(args.predictions).stem
    else:
        raise ConfigError("eval needs --cross-validate, --model, or --predictions")
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_json(), indent=2), encoding="utf-8"
        )
        write_provenance(
            Path(args.out), "eval", vars(args),
            [Path(p) for p in (args.dataset, args.model, args.predictions) if p],
        )
    print(render_table([(name, report)], layout="metrics-rows"))
    return 0


def cmd_llm_bench(args: argparse.Namespace) -> int:
    dataset = load_jsonl(args.dataset)
    template = PromptTemplate(tool=args.template, text=DETECT_TEMPLATES[args.template])
    client = _client_from_args(args)
    result = benchmark(dataset, template, client)
    if args.verdicts_out:
        save_verdicts(result.verdicts, args.verdicts_out)
        write_provenance(
            Path(args.verdicts_out), "llm-bench", vars(args), [Path(args.dataset)]
        )
    if args.report_out:
        Path(args.report_out).write_text(
            json.dumps(result.report.to_json(), indent=2), encoding="utf-8"
        )
    print(render_table([(args.model_name, result.report)], layout="models-rows"))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    names = args.names.split(",") if args.names else []
    reports = []
    for i, path in enumerate(args.reports):
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        name = names[i] if i < len(names) else Path(path).stem
        reports.append((name, MetricsReport.from_json(payload)))
    table = render_table(reports, layout=args.layout)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
        write_provenance(
            Path(args.out), "report", vars(args), [Path(p) for p in args.reports]
        )
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iacsmell",
        description="Detect and study security misconfigurations in IaC snippets",
    )
    parser.add_argument("--config", help="flat key = value config file; flags win")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="check a dataset and emit its manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("normalize", help="add canonical single-line text to records")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter-chars", default=DEFAULT_FILTER_CHARS)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("ablate", help="strip natural language or reduce context")
    p.add_argument("--mode", required=True, choices=("strip-nl", "reduce-context"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quarantine")
    p.add_argument("--nl-keys", default=",".join(("name", "description")))
    p.add_argument("--before", type=int, default=3)
    p.add_argument("--after", type=int, default=2)
    p.add_argument("--heuristic-mark", action="store_true",
                   help="mark misconfigured lines by pattern when unannotated")
    p.add_argument("--llm", action="store_true", help="use the LLM cleanup path")
    p.add_argument("--endpoint")
    p.add_argument("--model", dest="model_name")
    p.add_argument("--auth-env", default="IACSMELL_API_TOKEN")
    p.add_argument("--cache-dir", default=".llm-cache")
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--temperature", type=float, default=0.0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("split", help="stratified train/val/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ratios", default="0.7,0.2,0.1")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-baseline", help="train a featurizer+forest model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--features", required=True, choices=("bow", "tfidf"))
    p.add_argument("--model-out", required=True)
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--filter-chars", default=DEFAULT_FILTER_CHARS)
    p.add_argument("--seed", type=int, default=42)
    _add_forest_flags(p)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("eval", help="score a model, predictions file, or run CV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model")
    p.add_argument("--predictions")
    p.add_argument("--predictions-out")
    p.add_argument("--cross-validate", action="store_true")
    p.add_argument("--features", default="tfidf", choices=("bow", "tfidf"))
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--filter-chars", default=DEFAULT_FILTER_CHARS)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    _add_forest_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("llm-bench", help="benchmark a chat-completion model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--template", required=True, choices=("ansible", "puppet"))
    p.add_argument("--verdicts-out")
    p.add_argument("--report-out")
    _add_client_flags(p)
    p.set_defaults(func=cmd_llm_bench)

    p = sub.add_parser("report", help="render metric reports as a table")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--names")
    p.add_argument("--layout", default="metrics-rows",
                   choices=("metrics-rows", "models-rows"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        overrides = read_config(args.config)
        provided = {
            a.lstrip("-").replace("-", "_").split("=", 1)[0]
            for a in (argv if argv is not None else sys.argv[1:])
            if a.startswith("--")
        }
        aliases = {"model": "model_name"}  # --model parses into model_name
        for key, value in overrides.items():
            dest = aliases.get(key, key)
            if hasattr(args, dest) and key not in provided and dest not in provided:
                setattr(args, dest, value)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except IacsmellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
