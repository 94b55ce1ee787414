"""Dataset ablations: strip natural language from Ansible YAML, or cut
Puppet manifests down to the misconfigured lines plus a fixed window.

Both reductions are deterministic parsers. An optional LLM-backed path
exists for cross-checking against golden files, but it never replaces the
deterministic output silently.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import yaml

from .corpus import Snippet
from .errors import DataError
from .llm_bench import ChatClient, PromptTemplate, render_prompt

DEFAULT_NL_KEYS = ("name", "description")

ANSIBLE_CLEANUP_PROMPT = (
    "You are an expert in Ansible YAML task cleanup. Your job is to remove "
    "ONLY the parameters that do not contain executable logic, specifically "
    "those with natural language text. Additionally, remove all comments. "
    "Return ONLY the cleaned YAML snippet. Do not add any explanation.\n"
    "Here is the YAML snippet:\n[CODE_SNIPPET]"
)

PUPPET_REDUCTION_PROMPT = (
    "You are given a Puppet code snippet. Your task is to extract a reduced "
    "version of the script containing only the security misconfigured "
    "instruction(s) along with a small code context around them. Specifically, "
    "include the misconfigured line(s) as well as 3 lines before and 2 lines "
    "after to retain minimal readability. Ensure the extracted script "
    "maintains correct indentation and valid Puppet syntax. Return only the "
    "reduced code block.\n"
    "Here is the Puppet code snippet:\n[CODE_SNIPPET]"
)

# Lines that smell: hardcoded secrets, credentials inside URLs, and
# world-writable permission modes.
DEFAULT_SMELL_PATTERNS = (
    r"(?i)\b\w*(password|passwd|pwd|secret|pass)\w*\s*=>\s*['\"][^'\"]+['\"]",
    r"://[^/\s@']+:[^/\s@']+@",
    r"(?i)\bmode\s*=>\s*['\"]?0?(777|666)['\"]?",
)


class YamlParseError(DataError):
    """Snippet body is not valid YAML; carries the parser diagnostics so the
    snippet can be quarantined rather than dropped."""

    def __init__(self, diagnostics: str):
        super().__init__(f"unparseable YAML: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass
class AblationRule:
    mode: str = "strip_nl"  # "strip_nl" | "reduce_context"
    nl_keys: tuple[str, ...] = DEFAULT_NL_KEYS
    before: int = 3
    after: int = 2
    close_braces: bool = True

    def __post_init__(self):
        if self.before < 0 or self.after < 0:
            raise DataError("context window sizes must be non-negative")
        if self.mode == "strip_nl" and not self.nl_keys:
            raise DataError("strip_nl mode needs at least one natural-language key")


class _RawLoader(yaml.SafeLoader):
    """SafeLoader with implicit scalar typing disabled (except null), so
    values like 0750, True, or 1.5 survive as the strings they were."""


class _RawDumper(yaml.SafeDumper):
    pass


def _strip_implicit_resolvers(cls, keep=("tag:yaml.org,2002:null",)) -> None:
    resolvers = {}
    for key, rules in cls.yaml_implicit_resolvers.items():
        kept = [(tag, regexp) for tag, regexp in rules if tag in keep]
        if kept:
            resolvers[key] = kept
    cls.yaml_implicit_resolvers = resolvers


_strip_implicit_resolvers(_RawLoader)
_strip_implicit_resolvers(_RawDumper)
_RawDumper.add_representer(
    type(None), lambda dumper, _: dumper.represent_scalar("tag:yaml.org,2002:null", "")
)


def _remove_keys(node, keys: frozenset[str]):
    if isinstance(node, dict):
        return {k: _remove_keys(v, keys) for k, v in node.items() if k not in keys}
    if isinstance(node, list):
        return [_remove_keys(item, keys) for item in node]
    return node


def strip_ansible_nl(body: str, rule: AblationRule | None = None) -> str:
    """Remove comments and every mapping entry under a natural-language key,
    at any nesting depth; the rest re-serializes as YAML in original key
    order with executable parameters untouched."""
    rule = rule or AblationRule(mode="strip_nl")
    try:
        document = yaml.load(body, Loader=_RawLoader)
    except yaml.YAMLError as exc:
        raise YamlParseError(str(exc)) from exc
    if document is None:
        return ""
    cleaned = _remove_keys(document, frozenset(rule.nl_keys))
    return yaml.dump(
        cleaned,
        Dumper=_RawDumper,
        default_flow_style=False,
        sort_keys=False,
        allow_unicode=True,
        width=10_000,
    )


def merge_windows(
    lines: list[int], before: int, after: int, n_lines: int
) -> list[tuple[int, int]]:
    """Inclusive 1-based [start, end] windows around each annotated line,
    clipped to the body and merged when they touch or overlap."""
    windows = sorted(
        (max(1, ln - before), min(n_lines, ln + after)) for ln in lines
    )
    merged: list[tuple[int, int]] = []
    for start, end in windows:
        if merged and start <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _unclosed_brace_indents(lines: list[str]) -> list[str]:
    """Indentation of each opener line whose '{' is still open at the end of
    the text. Quote state resets per line (manifests are line-oriented)."""
    stack: list[str] = []
    for line in lines:
        in_quote = False
        for ch in line:
            if ch == "'":
                in_quote = not in_quote
            elif ch == "{" and not in_quote:
                indent = line[: len(line) - len(line.lstrip())]
                stack.append(indent)
            elif ch == "}" and not in_quote and stack:
                stack.pop()
    return stack


def reduce_puppet_context(snippet: Snippet, rule: AblationRule | None = None) -> str:
    """Keep each annotated line with its surrounding context window; merged
    windows are concatenated in order with original indentation. Braces left
    open by the cut are closed to keep the output syntactically valid."""
    rule = rule or AblationRule(mode="reduce_context")
    if not snippet.misconfig_lines:
        raise DataError(
            f"{snippet.id}: no misconfig_lines annotation; run heuristic_mark "
            "or annotate the dataset first"
        )
    body_lines = snippet.body.splitlines()
    n_lines = len(body_lines)
    for ln in snippet.misconfig_lines:
        if not 1 <= ln <= n_lines:
            raise DataError(f"{snippet.id}: misconfig_line {ln} outside [1, {n_lines}]")
    kept: list[str] = []
    for start, end in merge_windows(
        snippet.misconfig_lines, rule.before, rule.after, n_lines
    ):
        kept.extend(body_lines[start - 1 : end])
    if rule.close_braces:
        for indent in reversed(_unclosed_brace_indents(kept)):
            kept.append(f"{indent}}}")
    return "\n".join(kept) + ("\n" if snippet.body.endswith("\n") else "")


def heuristic_mark(body: str, patterns: tuple[str, ...] = DEFAULT_SMELL_PATTERNS) -> list[int]:
    """1-based numbers of lines matching any smell pattern; deterministic,
    possibly empty."""
    compiled = [re.compile(p) for p in patterns]
    marked = []
    for number, line in enumerate(body.splitlines(), start=1):
        if any(p.search(line) for p in compiled):
            marked.append(number)
    return marked


FENCE_PATTERN = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


@dataclass
class LlmCleanResult:
    """Model-produced cleanup next to the original body for review."""

    text: str
    original: str
    raw_response: str
    cached: bool = False


def llm_clean(
    body: str, template: PromptTemplate, client: ChatClient
) -> LlmCleanResult:
    """Ask a model to perform the reduction; the first fenced code block is
    extracted, a bare-code response is taken verbatim, and an empty response
    is an error carrying the raw text."""
    prompt = render_prompt(template, body)
    result = client.query(prompt)
    fenced = FENCE_PATTERN.search(result.text)
    if fenced:
        text = fenced.group(1)
    elif result.text.strip():
        text = result.text
    else:
        raise DataError(f"model returned no code block (raw: {result.text!r})")
    return LlmCleanResult(
        text=text, original=body, raw_response=result.text, cached=result.cached
    )


@dataclass
class QuarantineReport:
    """Snippets whose bodies could not be parsed, kept for manual review
    instead of being dropped."""

    entries: list[dict] = field(default_factory=list)

    def add(self, snippet_id: str, reason: str) -> None:
        self.entries.append({"id": snippet_id, "reason": reason})

    def to_json(self) -> dict:
        return {"quarantined": self.entries}
