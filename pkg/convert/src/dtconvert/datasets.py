"""Rewrite upstream benchmark files into the engine's line-record format.

Each handler takes the upstream layout that task actually ships in
(GLUE tsv, rt-polarity pair files, the TREC label file, AG News csv,
or task-specific JSON lines) and emits records per the published schema,
with labels mapped to the documented index conventions.
"""
import csv
import json
import os
import random

from .errors import PreparationError

# tasks whose pools exceed the evaluation budget get a seeded subsample
DEFAULT_SAMPLE = {"agnews": 2000, "hellaswag": 2000}

_TREC_CLASSES = ("ABBR", "ENTY", "DESC", "HUM", "LOC", "NUM")


def _classification(query: str, label: int) -> dict:
    return {"kind": "classification", "query": query, "label": label}


def _read_lines(path: str, encoding: str):
    try:
        with open(path, "r", encoding=encoding) as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise PreparationError(f"cannot read {path}: {exc}") from exc


def _read_jsonl(path: str):
    rows = []
    for i, line in enumerate(_read_lines(path, "utf-8"), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except ValueError as exc:
            raise PreparationError(f"{path}:{i}: not valid JSON: {exc}") from exc
    return rows


def _field(row, key, path):
    try:
        return row[key]
    except (KeyError, TypeError):
        raise PreparationError(f"{path}: record missing field {key!r}") from None


def _prep_sst2(source: str):
    lines = _read_lines(source, "utf-8")
    if not lines or lines[0].split("\t")[:2] != ["sentence", "label"]:
        raise PreparationError(f"{source}: expected tsv header 'sentence\\tlabel'")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise PreparationError(f"{source}:{i}: bad sentence/label row")
        records.append(_classification(parts[0].strip(), int(parts[1])))
    return records


def _prep_sst5(source: str):
    records = []
    for row in _read_jsonl(source):
        label = int(_field(row, "label", source))
        if not 0 <= label <= 4:
            raise PreparationError(f"{source}: label {label} outside 0..4")
        records.append(_classification(str(_field(row, "text", source)), label))
    return records


def _prep_mr(source: str):
    # rt-polarity pair files; negatives first to interleave deterministically
    records = []
    for fname, label in (("rt-polarity.neg", 0), ("rt-polarity.pos", 1)):
        path = os.path.join(source, fname)
        for line in _read_lines(path, "latin-1"):
            if line.strip():
                records.append(_classification(line.strip(), label))
    return records


def _prep_trec(source: str):
    records = []
    for i, line in enumerate(_read_lines(source, "latin-1"), start=1):
        if not line.strip():
            continue
        head, _, question = line.partition(" ")
        coarse = head.split(":")[0]
        if coarse not in _TREC_CLASSES or not question:
            raise PreparationError(f"{source}:{i}: bad label prefix {head!r}")
        records.append(
            _classification(question.strip(), _TREC_CLASSES.index(coarse))
        )
    return records


def _prep_agnews(source: str):
    records = []
    with open(source, "r", encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if len(row) != 3:
                raise PreparationError(f"{source}:{i}: expected 3 csv columns")
            cls, title, description = row
            if cls not in ("1", "2", "3", "4"):
                raise PreparationError(f"{source}:{i}: class {cls!r} outside 1..4")
            records.append(
                _classification(f"{title.strip()} {description.strip()}",
                                int(cls) - 1)
            )
    return records


def _prep_copa(source: str):
    records = []
    for row in _read_jsonl(source):
        question = _field(row, "question", source)
        if question not in ("cause", "effect"):
            raise PreparationError(f"{source}: question {question!r}")
        records.append({
            "kind": "multiple_choice",
            "query": str(_field(row, "premise", source)),
            "choices": [str(_field(row, "choice1", source)),
                        str(_field(row, "choice2", source))],
            "label": int(_field(row, "label", source)),
            "template_id": question,
        })
    return records


def _prep_letter_choices(source: str):
    # question stem with lettered choices and an answerKey letter
    records = []
    for row in _read_jsonl(source):
        question = _field(row, "question", source)
        stem = str(_field(question, "stem", source))
        choices = _field(question, "choices", source)
        letters = [str(_field(c, "label", source)) for c in choices]
        texts = [str(_field(c, "text", source)) for c in choices]
        key = str(_field(row, "answerKey", source))
        if key not in letters:
            raise PreparationError(f"{source}: answerKey {key!r} not in {letters}")
        records.append({
            "kind": "multiple_choice",
            "query": stem,
            "choices": texts,
            "label": letters.index(key),
        })
    return records


def _prep_hellaswag(source: str):
    records = []
    for row in _read_jsonl(source):
        endings = _field(row, "endings", source)
        records.append({
            "kind": "multiple_choice",
            "query": str(_field(row, "ctx", source)),
            "choices": [str(e) for e in endings],
            "label": int(_field(row, "label", source)),
        })
    return records


def _prep_winogrande(source: str):
    records = []
    for row in _read_jsonl(source):
        sentence = str(_field(row, "sentence", source))
        if sentence.count("_") != 1:
            raise PreparationError(
                f"{source}: sentence needs exactly one blank: {sentence!r}"
            )
        answer = str(_field(row, "answer", source))
        if answer not in ("1", "2"):
            raise PreparationError(f"{source}: answer {answer!r} outside 1/2")
        part_a, part_b = sentence.split("_")
        records.append({
            "kind": "multiple_choice",
            "query_a": part_a.strip(),
            "query_b": part_b.strip(),
            "choices": [str(_field(row, "option1", source)),
                        str(_field(row, "option2", source))],
            "label": int(answer) - 1,
        })
    return records


_HANDLERS = {
    "sst2": _prep_sst2,
    "sst5": _prep_sst5,
    "mr": _prep_mr,
    "trec": _prep_trec,
    "agnews": _prep_agnews,
    "copa": _prep_copa,
    "obqa": _prep_letter_choices,
    "qasc": _prep_letter_choices,
    "hellaswag": _prep_hellaswag,
    "winogrande": _prep_winogrande,
}


def prepare_dataset(name: str, source: str, out_path: str,
                    seed: int = 0, sample=None) -> int:
    """Emit records for one task; returns how many were written.

    sample=None applies the task's default subsample size (if any);
    sample=0 disables sampling; sampling keeps original order.
    """
    try:
        handler = _HANDLERS[name]
    except KeyError:
        known = ", ".join(sorted(_HANDLERS))
        raise PreparationError(f"unknown task {name!r} (known: {known})") from None
    records = handler(source)
    if not records:
        raise PreparationError(f"{source}: no records produced")

    target = DEFAULT_SAMPLE.get(name, 0) if sample is None else sample
    if target and len(records) > target:
        keep = sorted(random.Random(seed).sample(range(len(records)), target))
        records = [records[i] for i in keep]

    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return len(records)
