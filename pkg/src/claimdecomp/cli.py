"""Pipeline commands: decompose, decompscore, factscore, correlate, index.

Intermediate artifacts (subclaims, judgments) are always persisted as JSON
Lines so scoring can be replayed offline; every CSV cell is re-derivable
from the judgment files (see `audit_outputs`).

Exit codes: 0 success, 2 config/input error, 3 endpoint failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import conllu as conllu_mod
from .corpus import (CorpusError, Passage, attach_parses, load_example_bank,
                     load_generations, load_knowledge)
from .decompose import (DecomposeError, GenerationSettings, Subclaim,
                        decompose_passage, default_bank, method_registry)
from .llm import (CachingClient, CompletionClient, CompletionError,
                  HttpCompletionClient, MockCompletionClient)
from .metrics import (MethodReport, MetricsError, method_report, pearson,
                      results_from_judgments)
from .predarg import PredArgMethod
from .retrieval import RetrievalError, build_index, load_index, save_index, search
from .validate import (VALIDATOR_SETTINGS, SupportJudgment, ValidateError,
                       ValidationStats, judge_decomposition, judge_facts)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENDPOINT = 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    generations: str | None = None
    parses: str | None = None
    methods: list[str] = field(default_factory=list)
    example_banks: dict[str, str] = field(default_factory=dict)
    knowledge: str | None = None
    index_path: str | None = None
    output_dir: str = "out"
    cache_dir: str | None = None
    cache_only: bool = False
    mock_responses: str | None = None
    endpoint_url: str | None = None
    model: str = "default"
    validator_model: str | None = None
    max_inflight: int = 8
    chunk_words: int = 256
    retrieval_k: int = 5
    context_window: int = 4096
    max_tokens: int = 512
    temperature: float = 0.7
    drop_invalid: bool = False


_CONFIG_KEYS = set(RunConfig.__dataclass_fields__)


def _merge_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    path = getattr(args, "config", None)
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            setattr(cfg, key, value)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value not in (None, [], {}):
            setattr(cfg, key, value)
    if getattr(args, "bank", None):
        for spec in args.bank:
            if "=" not in spec:
                raise ConfigError(f"--bank expects METHOD=PATH, got {spec!r}")
            name, bank_path = spec.split("=", 1)
            cfg.example_banks[name] = bank_path
    if not cfg.methods:
        cfg.methods = ["rnd"]
    return cfg


def _mock_from_spec(spec: dict) -> MockCompletionClient:
    return MockCompletionClient(
        table=spec.get("table", {}),
        default=spec.get("default", ""),
        rules=[tuple(rule) for rule in spec.get("rules", [])],
        length_error_substrings=tuple(spec.get("length_error_substrings", [])),
    )


def _build_client(cfg: RunConfig, role: str) -> CompletionClient:
    """role is "decomposer" or "validator"; the mock-responses file may carry
    a spec per role or a single shared one."""
    client: CompletionClient
    if cfg.mock_responses:
        try:
            spec = json.loads(Path(cfg.mock_responses).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read mock responses: {exc}") from exc
        client = _mock_from_spec(spec.get(role, spec))
    else:
        if not cfg.endpoint_url and not os.environ.get("CLAIMDECOMP_ENDPOINT_URL"):
            raise ConfigError(
                "no endpoint configured: pass --endpoint, set "
                "CLAIMDECOMP_ENDPOINT_URL, or use --mock-responses")
        model = cfg.validator_model if role == "validator" and cfg.validator_model else cfg.model
        client = HttpCompletionClient(url=cfg.endpoint_url, model=model,
                                      max_inflight=cfg.max_inflight)
    if cfg.cache_dir:
        client = CachingClient(client, Path(cfg.cache_dir) / role,
                               cache_only=cfg.cache_only)
    return client


def _validator_id(cfg: RunConfig) -> str:
    if cfg.mock_responses:
        return "mock"
    return cfg.validator_model or cfg.model


def _load_passages(cfg: RunConfig) -> list[Passage]:
    if not cfg.generations:
        raise ConfigError("no generations file configured")
    passages = load_generations(cfg.generations, drop_invalid=cfg.drop_invalid)
    if cfg.parses:
        parses = conllu_mod.parse_conllu_file(cfg.parses)
        passages = attach_parses(passages, parses)
    return passages


def _resolve_methods(cfg: RunConfig) -> dict[str, object]:
    registry = method_registry()
    resolved = {}
    for name in cfg.methods:
        if name not in registry:
            raise ConfigError(f"unknown method {name!r}; choose from {sorted(registry)}")
        method = registry[name]
        if isinstance(method, PredArgMethod):
            resolved[name] = method
            continue
        if name in cfg.example_banks:
            bank = load_example_bank(cfg.example_banks[name])
        elif method.include_parse:
            raise ConfigError(
                f"method {name!r} needs a parse-bearing example bank (--bank {name}=PATH)")
        else:
            bank = default_bank()
        resolved[name] = method.with_bank(bank)
    return resolved


def _decomposition_settings(cfg: RunConfig) -> GenerationSettings:
    return GenerationSettings(temperature=cfg.temperature, max_tokens=cfg.max_tokens,
                              context_window=cfg.context_window)


# --- JSONL records ---------------------------------------------------------------

def _claim_record(c: Subclaim) -> dict:
    return {"topic": c.topic, "generator": c.generator, "method": c.method,
            "sentence_index": c.sentence_index, "ordinal": c.ordinal, "text": c.text}


def _claim_from_record(r: dict) -> Subclaim:
    return Subclaim(text=r["text"], topic=r["topic"], generator=r["generator"],
                    sentence_index=r["sentence_index"], method=r["method"],
                    ordinal=r["ordinal"])


def _judgment_record(j: SupportJudgment) -> dict:
    record = _claim_record(j.claim)
    record.update({"context_kind": j.context_kind, "supported": j.supported,
                   "validator_id": j.validator_id,
                   "context_snapshot": j.context_snapshot})
    return record


def _judgment_from_record(r: dict) -> SupportJudgment:
    return SupportJudgment(claim=_claim_from_record(r),
                           context_kind=r["context_kind"], supported=r["supported"],
                           validator_id=r["validator_id"],
                           context_snapshot=r["context_snapshot"])


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def _dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def subclaims_path(outdir: Path, method: str) -> Path:
    return outdir / f"subclaims-{method}.jsonl"


def sentence_judgments_path(outdir: Path, method: str) -> Path:
    return outdir / f"sentence-judgments-{method}.jsonl"


def knowledge_judgments_path(outdir: Path, method: str) -> Path:
    return outdir / f"knowledge-judgments-{method}.jsonl"


# --- commands --------------------------------------------------------------------

def cmd_decompose(cfg: RunConfig) -> int:
    passages = _load_passages(cfg)
    methods = _resolve_methods(cfg)
    client = _build_client(cfg, "decomposer")
    settings = _decomposition_settings(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    for name, method in methods.items():
        path = subclaims_path(outdir, name)
        done: set[tuple[str, str]] = set()
        if path.exists():
            done = {(r["generator"], r["topic"]) for r in _read_jsonl(path)}
        with open(path, "a", encoding="utf-8") as fh:
            for passage in passages:
                if (passage.generator, passage.topic) in done:
                    continue
                claims = decompose_passage(method, passage, client, settings,
                                           max_workers=cfg.max_inflight)
                # one buffered write per passage so an interrupt never leaves
                # a partially decomposed passage behind
                fh.write("".join(_dump_line(_claim_record(c)) for c in claims))
                fh.flush()
        print(f"decompose[{name}]: {path}")
    return EXIT_OK


def _sentence_texts(passages: list[Passage]) -> dict[tuple[str, str, int], str]:
    return {
        (p.generator, p.topic, s.index): s.text
        for p in passages for s in p.sentences
    }


def _load_subclaims(outdir: Path, method: str) -> list[Subclaim]:
    path = subclaims_path(outdir, method)
    if not path.exists():
        raise ConfigError(f"missing subclaims file {path}; run decompose first")
    return [_claim_from_record(r) for r in _read_jsonl(path)]


def cmd_decompscore(cfg: RunConfig) -> int:
    passages = _load_passages(cfg)
    texts = _sentence_texts(passages)
    client = _build_client(cfg, "validator")
    validator_id = _validator_id(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    reports: dict[str, MethodReport] = {}
    stats = ValidationStats()
    for name in cfg.methods:
        claims = _load_subclaims(outdir, name)
        if not claims:
            logger.warning("method %s produced no subclaims; column omitted", name)
            continue
        judgments: list[SupportJudgment] = []
        by_sentence: dict[tuple[str, str, int], list[Subclaim]] = {}
        for claim in claims:
            by_sentence.setdefault(
                (claim.generator, claim.topic, claim.sentence_index), []).append(claim)
        for key in sorted(by_sentence):
            if key not in texts:
                raise ConfigError(f"no source sentence for subclaim group {key}")
            judgments.extend(judge_decomposition(
                client, texts[key], by_sentence[key],
                validator_id=validator_id, settings=VALIDATOR_SETTINGS, stats=stats))
        with open(sentence_judgments_path(outdir, name), "w", encoding="utf-8") as fh:
            fh.write("".join(_dump_line(_judgment_record(j)) for j in judgments))
        results = results_from_judgments(claims, sentence_judgments=judgments)
        reports[name] = method_report(results)

    if stats.unparseable:
        print(f"warning: {stats.unparseable} unparseable validator answers "
              "counted as unsupported")
    _write_report_csv(outdir / "decompscore.csv", reports, "decomp_score")
    _write_report_csv(outdir / "avg_subclaims.csv", reports, "avg_subclaims")
    _write_report_csv(outdir / "coherence.csv", reports, "coherence_pct")
    print(f"decompscore: {outdir / 'decompscore.csv'}")
    return EXIT_OK


def cmd_factscore(cfg: RunConfig) -> int:
    passages = _load_passages(cfg)
    if cfg.index_path:
        index = load_index(cfg.index_path)
    elif cfg.knowledge:
        index = build_index(load_knowledge(cfg.knowledge), cfg.chunk_words)
    else:
        raise ConfigError("factscore needs --index or --knowledge")
    client = _build_client(cfg, "validator")
    validator_id = _validator_id(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    reports: dict[str, MethodReport] = {}
    stats = ValidationStats()
    for name in cfg.methods:
        claims = _load_subclaims(outdir, name)
        if not claims:
            logger.warning("method %s produced no subclaims; column omitted", name)
            continue
        by_passage: dict[tuple[str, str], list[Subclaim]] = {}
        for claim in claims:
            by_passage.setdefault((claim.generator, claim.topic), []).append(claim)
        passage_map = {(p.generator, p.topic): p for p in passages}
        judgments: list[SupportJudgment] = []
        for key in sorted(by_passage):
            if key not in passage_map:
                raise ConfigError(f"no passage for subclaim group {key}")
            judgments.extend(judge_facts(
                client, index, passage_map[key], by_passage[key], k=cfg.retrieval_k,
                validator_id=validator_id, settings=VALIDATOR_SETTINGS, stats=stats))
        with open(knowledge_judgments_path(outdir, name), "w", encoding="utf-8") as fh:
            fh.write("".join(_dump_line(_judgment_record(j)) for j in judgments))

        sentence_path = sentence_judgments_path(outdir, name)
        sentence_judgments = None
        if sentence_path.exists():
            sentence_judgments = [_judgment_from_record(r) for r in _read_jsonl(sentence_path)]
        else:
            logger.warning("no sentence judgments for %s; filtered scores use "
                           "zero-supported counts", name)
        results = results_from_judgments(claims, sentence_judgments=sentence_judgments,
                                         knowledge_judgments=judgments)
        reports[name] = method_report(results)

    if stats.empty_context:
        print(f"warning: {stats.empty_context} claims had empty retrieval context")
    _write_report_csv(outdir / "factscore.csv", reports, "fact_score", scale=100.0)
    _write_report_csv(outdir / "filtered_factscore.csv", reports,
                      "filtered_fact_score", scale=100.0)
    _write_scatter_csv(outdir / "scatter.csv", reports)
    print(f"factscore: {outdir / 'factscore.csv'}")
    return EXIT_OK


def cmd_correlate(file_a: str, file_b: str, columns: list[str],
                  out: str | None = None) -> int:
    rows_a = _read_keyed_csv(Path(file_a))
    rows_b = _read_keyed_csv(Path(file_b))
    if sorted(rows_a) != sorted(rows_b):
        raise ConfigError(
            f"misaligned keys: {sorted(set(rows_a) ^ set(rows_b))}")
    keys = sorted(rows_a)
    lines = [("column", "pearson_rho")]
    for column in columns:
        try:
            xs = [float(rows_a[k][column]) for k in keys]
            ys = [float(rows_b[k][column]) for k in keys]
        except KeyError as exc:
            raise ConfigError(f"missing column {exc} in input") from exc
        rho = pearson(xs, ys)
        lines.append((column, f"{rho:.4f}"))
        print(f"{column}: rho={rho:.4f}")
    if out:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(lines)
    return EXIT_OK


def cmd_index_build(knowledge: str, out: str, chunk_words: int) -> int:
    index = build_index(load_knowledge(knowledge), chunk_words)
    save_index(index, out)
    print(f"index: {len(index.chunks)} chunks -> {out}")
    return EXIT_OK


def cmd_index_search(index_path: str, query: str, k: int,
                     title: str | None = None) -> int:
    index = load_index(index_path)
    for chunk, score in search(index, query, k, restrict_title=title):
        print(f"{score:.4f}\t{chunk.doc_title}#{chunk.ordinal}\t{chunk.text[:80]}")
    return EXIT_OK


# --- CSV emission ----------------------------------------------------------------

def _read_keyed_csv(path: Path) -> dict[str, dict[str, str]]:
    if not path.exists():
        raise ConfigError(f"missing file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise ConfigError(f"empty CSV {path}")
        key_field = reader.fieldnames[0]
        return {row[key_field]: row for row in reader}


def _write_report_csv(path: Path, reports: dict[str, MethodReport],
                      metric: str, scale: float = 1.0) -> None:
    """Rows per generator plus a macro-average row; one column per method.
    Cells rounded to one decimal; a *_raw.csv sibling keeps full precision."""
    methods = list(reports)
    generators = sorted({lm for rep in reports.values() for lm in rep.per_lm})

    def cell(rep: MethodReport, lm: str | None) -> float:
        metrics = rep.macro if lm is None else rep.per_lm[lm]
        return getattr(metrics, metric) * scale

    for raw in (False, True):
        target = path.with_name(path.stem + "_raw.csv") if raw else path
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["generator"] + methods)
            for lm in generators:
                writer.writerow([lm] + [
                    _fmt(cell(reports[m], lm), raw) for m in methods])
            writer.writerow(["macro-average"] + [
                _fmt(cell(reports[m], None), raw) for m in methods])


def _fmt(value: float, raw: bool) -> str:
    return f"{value:.10g}" if raw else f"{value:.1f}"


def _write_scatter_csv(path: Path, reports: dict[str, MethodReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "avg_subclaims", "factscore"])
        for name, rep in reports.items():
            writer.writerow([name, f"{rep.macro.avg_subclaims:.10g}",
                             f"{rep.macro.fact_score * 100.0:.10g}"])


def audit_outputs(outdir: str | Path, methods: list[str]) -> None:
    """Recompute every report CSV cell from the persisted judgment files and
    raise if anything differs (within float formatting)."""
    outdir = Path(outdir)
    reports: dict[str, MethodReport] = {}
    for name in methods:
        claims = _load_subclaims(outdir, name)
        sentence = [_judgment_from_record(r)
                    for r in _read_jsonl(sentence_judgments_path(outdir, name))]
        knowledge_path = knowledge_judgments_path(outdir, name)
        knowledge = None
        if knowledge_path.exists():
            knowledge = [_judgment_from_record(r) for r in _read_jsonl(knowledge_path)]
        results = results_from_judgments(claims, sentence_judgments=sentence,
                                         knowledge_judgments=knowledge)
        reports[name] = method_report(results)

    for filename, metric, scale in (
            ("decompscore.csv", "decomp_score", 1.0),
            ("avg_subclaims.csv", "avg_subclaims", 1.0),
            ("coherence.csv", "coherence_pct", 1.0),
            ("factscore.csv", "fact_score", 100.0),
            ("filtered_factscore.csv", "filtered_fact_score", 100.0)):
        path = outdir / filename
        if not path.exists():
            continue
        rows = _read_keyed_csv(path)
        for key, row in rows.items():
            for method in methods:
                if method not in row:
                    continue
                rep = reports[method]
                expected = (rep.macro if key == "macro-average"
                            else rep.per_lm[key])
                value = getattr(expected, metric) * scale
                if abs(float(row[method]) - value) > 0.05 + 1e-9:
                    raise MetricsError(
                        f"{filename} cell ({key}, {method}) = {row[method]} "
                        f"but judgments give {value:.4f}")


# --- argument parsing --------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--generations", help="generations JSONL")
    parser.add_argument("--parses", help="CoNLL-U file aligned with the sentences")
    parser.add_argument("--method", dest="methods", action="append",
                        help="decomposition method (repeatable)")
    parser.add_argument("--bank", action="append", metavar="METHOD=PATH",
                        help="example bank for a method (repeatable)")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--cache-only", dest="cache_only", action="store_true",
                        default=None, help="fail on cache miss instead of calling out")
    parser.add_argument("--mock-responses", dest="mock_responses",
                        help="JSON file of canned completions (offline runs)")
    parser.add_argument("--endpoint", dest="endpoint_url",
                        help="completions endpoint URL")
    parser.add_argument("--model", help="decomposer model name")
    parser.add_argument("--validator-model", dest="validator_model")
    parser.add_argument("--max-inflight", dest="max_inflight", type=int)
    parser.add_argument("--context-window", dest="context_window", type=int)
    parser.add_argument("--max-tokens", dest="max_tokens", type=int)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--knowledge", help="knowledge corpus JSONL")
    parser.add_argument("--index", dest="index_path", help="prebuilt index file")
    parser.add_argument("--chunk-words", dest="chunk_words", type=int)
    parser.add_argument("--retrieval-k", dest="retrieval_k", type=int)
    parser.add_argument("--drop-invalid", dest="drop_invalid", action="store_true",
                        default=None, help="skip invalid LM responses")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimdecomp",
        description="Decompose generated passages into subclaims and score them.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("decompose", "decompscore", "factscore"):
        p = sub.add_parser(name)
        _add_common(p)

    p_corr = sub.add_parser("correlate")
    p_corr.add_argument("file_a")
    p_corr.add_argument("file_b")
    p_corr.add_argument("--columns", required=True,
                        help="comma-separated column names")
    p_corr.add_argument("--out")

    p_index = sub.add_parser("index")
    isub = p_index.add_subparsers(dest="index_command", required=True)
    p_build = isub.add_parser("build")
    p_build.add_argument("--knowledge", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--chunk-words", type=int, default=256)
    p_search = isub.add_parser("search")
    p_search.add_argument("--index", required=True)
    p_search.add_argument("--query", required=True)
    p_search.add_argument("--k", type=int, default=5)
    p_search.add_argument("--title")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "decompose":
            return cmd_decompose(_merge_config(args))
        if args.command == "decompscore":
            return cmd_decompscore(_merge_config(args))
        if args.command == "factscore":
            return cmd_factscore(_merge_config(args))
        if args.command == "correlate":
            return cmd_correlate(args.file_a, args.file_b,
                                 [c.strip() for c in args.columns.split(",") if c.strip()],
                                 out=args.out)
        if args.command == "index":
            if args.index_command == "build":
                return cmd_index_build(args.knowledge, args.out, args.chunk_words)
            return cmd_index_search(args.index, args.query, args.k, title=args.title)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, CorpusError, DecomposeError, RetrievalError, MetricsError,
            conllu_mod.ConlluError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CompletionError, ValidateError) as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
