"""Prompt templating, datasets, candidate scoring, and evaluation.

A task is described by a PromptSpec: one template serves both for rendering
demonstrations (with the gold answer filled in) and for scoring (with each
candidate filled in). The answer slot is {label} for classification, where
candidates come from the verbalizer list, and {choice} for multiple choice,
where candidates come from the example itself. The slot may sit mid-template
(the two-part query style), so scoring tracks the answer's byte range and
aggregates only over tokens that overlap it.

Evaluation runs the test prompt alone against a stored KV prefix; the
vanilla baseline is the same prompt behind the demonstration tokens in one
concatenated pass. Concatenation happens at the token level so the two
routes see identical test tokens.
"""

from __future__ import annotations

import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError, InputError, ParseError
from .model import KVState, ModelWeights, forward_hidden, unembed
from .thinking import ThinkConfig, ThinkResult, deep_think

CLASSIFICATION = "classification"
MULTIPLE_CHOICE = "multiple_choice"

_FIELD_NAMES = {"query", "query_a", "query_b"}
_PLACEHOLDER = re.compile(r"{(\w+)}")


@dataclass(frozen=True)
class PromptSpec:
    task_id: str
    kind: str
    template: Union[str, Mapping[str, str]]
    verbalizers: tuple[str, ...] = ()
    separator: str = "\n"

    def __post_init__(self):
        if self.kind not in (CLASSIFICATION, MULTIPLE_CHOICE):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.kind == CLASSIFICATION:
            if not self.verbalizers:
                raise ConfigError("classification task needs verbalizers")
            if len(set(self.verbalizers)) != len(self.verbalizers):
                raise ConfigError("verbalizers must be duplicate-free")
        templates = (
            [self.template] if isinstance(self.template, str)
            else list(self.template.values())
        )
        if not templates:
            raise ConfigError("template table is empty")
        for tpl in templates:
            names = _PLACEHOLDER.findall(tpl)
            if names.count(self.answer_slot) != 1:
                raise ConfigError(
                    f"template {tpl!r} must use {{{self.answer_slot}}} exactly once"
                )
            unknown = set(names) - _FIELD_NAMES - {self.answer_slot}
            if unknown:
                raise ConfigError(f"template {tpl!r} has unbound {sorted(unknown)}")

    @property
    def answer_slot(self) -> str:
        return "label" if self.kind == CLASSIFICATION else "choice"

    def template_for(self, example: "TaskExample") -> str:
        if isinstance(self.template, str):
            return self.template
        try:
            return self.template[example.template_id]
        except KeyError:
            raise DataError(
                f"task {self.task_id}: no template for "
                f"template_id {example.template_id!r}"
            ) from None

    def candidates(self, example: "TaskExample") -> tuple[str, ...]:
        if self.kind == CLASSIFICATION:
            return self.verbalizers
        if not example.choices:
            raise DataError(f"task {self.task_id}: example has no choices")
        return example.choices


@dataclass(frozen=True)
class TaskExample:
    label: int
    query: str = ""
    query_a: str = ""
    query_b: str = ""
    choices: tuple[str, ...] = ()
    template_id: str = ""

    def __post_init__(self):
        if self.label < 0:
            raise DataError(f"negative gold label {self.label}")
        if self.choices and self.label >= len(self.choices):
            raise DataError(
                f"gold label {self.label} outside {len(self.choices)} choices"
            )


@dataclass(frozen=True)
class EvalConfig:
    n_shot: int = 1
    seed: int = 0
    score_mode: str = "sum_log_prob"
    t_max: int = 15
    position_offset: Optional[int] = None  # None = prefix length
    threads: int = 1

    def __post_init__(self):
        if self.n_shot < 1:
            raise ConfigError("n_shot must be >= 1")
        if self.score_mode not in ("sum_log_prob", "sum_prob"):
            raise ConfigError(f"unknown score mode {self.score_mode!r}")
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


@dataclass(frozen=True)
class EvalReport:
    """Per-step accuracies (index 0 is t=1, the vanilla baseline) plus
    token/attention cost totals for the prefix route and the concatenated
    baseline over the same scored forwards."""

    accuracies: tuple[float, ...]
    best_step: int
    best_accuracy: float
    vanilla_accuracy: float
    n_examples: int
    tokens_ours: int
    tokens_baseline: int
    attn_elements_ours: int
    attn_elements_baseline: int

    def __post_init__(self):
        if not self.accuracies:
            raise ConfigError("empty accuracy table")
        if any(not 0.0 <= a <= 1.0 for a in self.accuracies):
            raise ConfigError("accuracies must lie in [0, 1]")
        if self.best_accuracy != max(self.accuracies):
            raise ConfigError("best_accuracy must be the max per-step accuracy")

    @property
    def tokens_per_example_ours(self) -> float:
        return self.tokens_ours / self.n_examples

    @property
    def tokens_per_example_baseline(self) -> float:
        return self.tokens_baseline / self.n_examples

    @property
    def attn_ratio(self) -> float:
        return self.attn_elements_ours / self.attn_elements_baseline


def render_with_answer(template: str, fields: Mapping[str, str],
                       slot: str, answer: str):
    """Fill the template; returns (text, (start, end)) with the answer's
    half-open byte range in the UTF-8 encoding of text."""
    before, after = template.split("{" + slot + "}")
    safe = {k: fields.get(k, "") for k in _FIELD_NAMES}
    before = before.format(**safe)
    after = after.format(**safe)
    start = len(before.encode("utf-8"))
    end = start + len(answer.encode("utf-8"))
    return before + answer + after, (start, end)


def _example_fields(example: TaskExample) -> dict[str, str]:
    return {
        "query": example.query,
        "query_a": example.query_a,
        "query_b": example.query_b,
    }


def render_candidate(spec: PromptSpec, example: TaskExample, candidate: int):
    """Rendered scoring prompt for one candidate: (text, answer byte range)."""
    answer = spec.candidates(example)[candidate]
    return render_with_answer(
        spec.template_for(example), _example_fields(example),
        spec.answer_slot, answer,
    )


def render_demo(spec: PromptSpec, example: TaskExample) -> str:
    text, _ = render_candidate(spec, example, example.label)
    return text


def render_demos(
    spec: PromptSpec,
    examples: Sequence[TaskExample],
    n_shot: int,
    seed: int,
) -> str:
    """Sample n_shot demonstrations per class, render, shuffle, join.

    Deterministic in (examples order, n_shot, seed). The returned block ends
    with the separator so test prompts append directly after it.
    """
    by_class: dict[int, list[TaskExample]] = {}
    for ex in examples:
        by_class.setdefault(ex.label, []).append(ex)
    if spec.kind == CLASSIFICATION:
        wanted = range(len(spec.verbalizers))
    else:
        wanted = sorted(by_class)
    rng = random.Random(seed)
    chosen = []
    for cls in wanted:
        pool = by_class.get(cls, [])
        if len(pool) < n_shot:
            raise DataError(
                f"task {spec.task_id}: class {cls} has {len(pool)} examples, "
                f"need {n_shot}"
            )
        chosen.extend(rng.sample(pool, n_shot))
    rng.shuffle(chosen)
    return spec.separator.join(render_demo(spec, ex) for ex in chosen) + spec.separator


def _require_tokenizer(weights: ModelWeights):
    if weights.tokenizer is None:
        raise ConfigError("model has no tokenizer attached")
    return weights.tokenizer


def _answer_rows(ids: Sequence[int], spans, answer_range) -> list[int]:
    """Token positions whose byte span overlaps the answer range and which
    have a preceding position to predict them from."""
    a_start, a_end = answer_range
    rows = [
        p for p, (s, e) in enumerate(spans)
        if s < a_end and e > a_start and p >= 1
    ]
    if not rows:
        raise DataError("no scorable answer tokens in prompt")
    return rows


def _score_rows(
    weights: ModelWeights,
    prefix: Optional[KVState],
    ids: Sequence[int],
    rows: Sequence[int],
    mode: str,
    position_offset: int,
) -> float:
    hidden, _ = forward_hidden(ids, weights, prefix, position_offset)
    need = sorted({p - 1 for p in rows})
    logits = unembed(hidden[need], weights).astype(np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    row_of = {p: i for i, p in enumerate(need)}
    picked = [logp[row_of[p - 1], ids[p]] for p in rows]
    if mode == "sum_prob":
        return float(np.exp(picked).sum())
    return float(sum(picked))


def score_candidate(
    weights: ModelWeights,
    prefix: Optional[KVState],
    query_text: str,
    candidate_text: str,
    mode: str = "sum_log_prob",
    suffix_text: str = "",
    position_offset: Optional[int] = None,
) -> float:
    """Score candidate_text inside query_text + candidate_text + suffix_text.

    Aggregates over the candidate's token positions only: sum of
    log-probabilities by default, or a literal sum of probabilities in
    "sum_prob" mode. With a prefix, positions start after it by default.
    """
    tokenizer = _require_tokenizer(weights)
    text = query_text + candidate_text + suffix_text
    a_start = len(query_text.encode("utf-8"))
    a_end = a_start + len(candidate_text.encode("utf-8"))
    ids, spans = tokenizer.encode_with_spans(text)
    rows = _answer_rows(ids, spans, (a_start, a_end))
    if position_offset is None:
        position_offset = prefix.length if prefix is not None else 0
    return _score_rows(weights, prefix, ids, rows, mode, position_offset)


@dataclass(frozen=True)
class _PreparedCandidate:
    ids: tuple[int, ...]
    rows: tuple[int, ...]


def _prepare_example(spec, example, tokenizer) -> list[_PreparedCandidate]:
    prepared = []
    for c in range(len(spec.candidates(example))):
        text, answer_range = render_candidate(spec, example, c)
        ids, spans = tokenizer.encode_with_spans(text)
        rows = _answer_rows(ids, spans, answer_range)
        prepared.append(_PreparedCandidate(ids=tuple(ids), rows=tuple(rows)))
    return prepared


def _predict_prepared(
    weights, prefix, candidates: Sequence[_PreparedCandidate],
    mode: str, position_offset: int,
) -> int:
    scores = [
        _score_rows(weights, prefix, c.ids, c.rows, mode, position_offset)
        for c in candidates
    ]
    return max(range(len(scores)), key=lambda i: (scores[i], -i))


def predict(
    weights: ModelWeights,
    prefix: Optional[KVState],
    spec: PromptSpec,
    example: TaskExample,
    mode: str = "sum_log_prob",
    position_offset: Optional[int] = None,
) -> int:
    """Argmax of score_candidate over the candidate set; ties go to the
    lowest index."""
    tokenizer = _require_tokenizer(weights)
    if position_offset is None:
        position_offset = prefix.length if prefix is not None else 0
    return _predict_prepared(
        weights, prefix, _prepare_example(spec, example, tokenizer),
        mode, position_offset,
    )


def evaluate(
    weights: ModelWeights,
    thought: Union[ThinkResult, KVState, Sequence[int]],
    spec: PromptSpec,
    dataset: Sequence[TaskExample],
    config: EvalConfig,
) -> EvalReport:
    """Accuracy for every optimization step t = 1..T plus cost accounting.

    thought is a ThinkResult carrying per-step snapshots, a single stored
    KVState (one accuracy row), or a raw demonstration token sequence (then
    the thinking stage runs here with default step size and momentum).
    """
    if not dataset:
        raise DataError("dataset is empty")
    tokenizer = _require_tokenizer(weights)

    if isinstance(thought, ThinkResult):
        if thought.snapshots is None:
            raise InputError("ThinkResult lacks snapshots; rerun with recording")
        snapshots = thought.snapshots
    elif isinstance(thought, KVState):
        snapshots = (thought,)
    else:
        result = deep_think(
            weights, list(thought),
            ThinkConfig(steps=config.t_max, record_snapshots=True),
        )
        snapshots = result.snapshots

    prepared = [_prepare_example(spec, ex, tokenizer) for ex in dataset]
    golds = [ex.label for ex in dataset]
    demo_len = snapshots[0].length
    offset = (
        config.position_offset if config.position_offset is not None else demo_len
    )

    accuracies = []
    for state in snapshots:
        def job(cands, state=state):
            return _predict_prepared(
                weights, state, cands, config.score_mode, offset
            )

        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                preds = list(pool.map(job, prepared))
        else:
            preds = [job(cands) for cands in prepared]
        correct = sum(p == g for p, g in zip(preds, golds))
        accuracies.append(correct / len(dataset))

    hb = weights.config.n_layers * weights.config.n_heads
    tokens_ours = tokens_base = attn_ours = attn_base = 0
    for cands in prepared:
        for cand in cands:
            lt = len(cand.ids)
            tokens_ours += lt
            tokens_base += demo_len + lt
            attn_ours += hb * (lt * demo_len + lt * (lt + 1) // 2)
            full = demo_len + lt
            attn_base += hb * (full * (full + 1) // 2)

    best = max(range(len(accuracies)), key=lambda i: (accuracies[i], -i))
    return EvalReport(
        accuracies=tuple(accuracies),
        best_step=best + 1,
        best_accuracy=accuracies[best],
        vanilla_accuracy=accuracies[0],
        n_examples=len(dataset),
        tokens_ours=tokens_ours,
        tokens_baseline=tokens_base,
        attn_elements_ours=attn_ours,
        attn_elements_baseline=attn_base,
    )


def load_dataset(path: str) -> list[TaskExample]:
    """Parse the line-delimited record format (one JSON object per line)."""
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise ParseError(path, line_no, f"not valid JSON: {exc}")
            if not isinstance(rec, dict):
                raise ParseError(path, line_no, "record is not an object")
            kind = rec.get("kind")
            if kind not in (CLASSIFICATION, MULTIPLE_CHOICE):
                raise ParseError(path, line_no, f"unknown kind {kind!r}")
            if "label" not in rec:
                raise ParseError(path, line_no, "missing gold label")
            has_split = "query_a" in rec or "query_b" in rec
            if not has_split and "query" not in rec:
                raise ParseError(path, line_no, "missing query field")
            if has_split and not ("query_a" in rec and "query_b" in rec):
                raise ParseError(path, line_no, "need both query_a and query_b")
            if kind == MULTIPLE_CHOICE and not rec.get("choices"):
                raise ParseError(path, line_no, "multiple_choice needs choices")
            try:
                examples.append(
                    TaskExample(
                        label=int(rec["label"]),
                        query=str(rec.get("query", "")),
                        query_a=str(rec.get("query_a", "")),
                        query_b=str(rec.get("query_b", "")),
                        choices=tuple(str(c) for c in rec.get("choices", [])),
                        template_id=str(rec.get("template_id", "")),
                    )
                )
            except DataError as exc:
                raise ParseError(path, line_no, str(exc)) from None
    return examples


BUILTIN_TASKS: dict[str, PromptSpec] = {
    spec.task_id: spec
    for spec in (
        PromptSpec("sst2", CLASSIFICATION,
                   "Review: {query}\nSentiment: {label}",
                   verbalizers=("negative", "positive")),
        PromptSpec("sst5", CLASSIFICATION,
                   "Review: {query}\nSentiment: {label}",
                   verbalizers=("terrible", "negative", "neutral",
                                "positive", "great")),
        PromptSpec("mr", CLASSIFICATION,
                   "Review: {query}\nSentiment: {label}",
                   verbalizers=("negative", "positive")),
        PromptSpec("trec", CLASSIFICATION,
                   "Question: {query}\nType: {label}",
                   verbalizers=("Abbreviation", "Entity", "Description",
                                "Person", "Location", "Number")),
        PromptSpec("agnews", CLASSIFICATION,
                   "Article: {query}\nCategory: {label}",
                   verbalizers=("World", "Sports", "Business", "Technology")),
        PromptSpec("copa", MULTIPLE_CHOICE,
                   {"cause": "{query} because {choice}",
                    "effect": "{query} therefore {choice}"}),
        PromptSpec("obqa", MULTIPLE_CHOICE, "{query} {choice}"),
        PromptSpec("qasc", MULTIPLE_CHOICE, "{query} {choice}"),
        PromptSpec("hellaswag", MULTIPLE_CHOICE, "{query} {choice}"),
        PromptSpec("winogrande", MULTIPLE_CHOICE, "{query_a} {choice} {query_b}"),
    )
}


def get_task(task_id: str) -> PromptSpec:
    try:
        return BUILTIN_TASKS[task_id]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_TASKS))
        raise ConfigError(f"unknown task {task_id!r} (known: {known})") from None
