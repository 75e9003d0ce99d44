"""Questions, answer labels, traces, and deterministic answer parsing."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

TRACE_SCHEMA = "trace.v1"
LETTERS = "ABCDE"


class TaskKind(str, Enum):
    NUMERIC = "numeric"
    MULTIPLE_CHOICE = "multiple_choice"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AnswerLabel:
    kind: str   # "numeric" | "letter" | "null"
    value: str = ""

    def __post_init__(self):
        if self.kind not in ("numeric", "letter", "null"):
            raise ValueError(f"unknown label kind {self.kind!r}")
        if self.kind == "null" and self.value:
            raise ValueError("null label carries no value")
        if self.kind == "letter" and (len(self.value) != 1 or self.value not in LETTERS):
            raise ValueError(f"letter labels are single A-E, got {self.value!r}")

    @property
    def is_null(self) -> bool:
        return self.kind == "null"

    def key(self) -> str:
        return "null" if self.is_null else f"{self.kind}:{self.value}"

    @classmethod
    def from_key(cls, key: str) -> "AnswerLabel":
        if key == "null":
            return NULL
        kind, _, value = key.partition(":")
        return cls(kind, value)

    def __str__(self) -> str:
        return self.value if not self.is_null else "<null>"


NULL = AnswerLabel("null")


# -- normalization ---------------------------------------------------------------

_CURRENCY = re.compile(r"[$€£¥₹]")
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
_NUMBER = re.compile(r"(?<![\w.])-?\d+(?:\.\d+)?(?![\w])|(?<![\w.])-?\.\d+(?![\w])")
_FULL_NUMBER = re.compile(r"-?(?:\d+(?:\.\d*)?|\.\d+)")


def _canonical_number(s: str) -> str | None:
    try:
        d = Decimal(s)
    except InvalidOperation:
        return None
    if not d.is_finite():
        return None
    if d == 0:
        return "0"
    d = d.normalize()
    text = format(d, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def normalize_numeric(text: str) -> AnswerLabel:
    """Canonical numeric label, or the null label when no number is present.

    Strips currency symbols, thousands separators and surrounding punctuation,
    drops trailing fractional zeros and maps -0 to 0. If the cleaned text is
    not itself a number, the last standalone number in it is used. Word
    numbers are not parsed.
    """
    if text is None:
        return NULL
    s = _CURRENCY.sub("", str(text))
    s = _THOUSANDS.sub("", s).strip()
    core = s.strip(" \t\n\r.,;:!?()[]{}*\"'`")
    if _FULL_NUMBER.fullmatch(core):
        val = _canonical_number(core)
        return AnswerLabel("numeric", val) if val is not None else NULL
    found = _NUMBER.findall(s)
    if not found:
        return NULL
    val = _canonical_number(found[-1])
    return AnswerLabel("numeric", val) if val is not None else NULL


def normalize_letter(text: str) -> AnswerLabel:
    """Single option letter (case-insensitive); digits 1-5 map to A-E."""
    s = str(text).strip().strip(" \t\n.,;:!?()[]{}*\"'`").upper()
    if len(s) == 1 and s in LETTERS:
        return AnswerLabel("letter", s)
    if len(s) == 1 and s in "12345":
        return AnswerLabel("letter", LETTERS[int(s) - 1])
    return NULL


def label_correctness(label: AnswerLabel, gold: AnswerLabel) -> bool:
    if label.is_null or gold.is_null:
        return False
    return label.kind == gold.kind and label.value == gold.value


# -- extraction ------------------------------------------------------------------

_NUM = r"\$?\s*(-?[\d,]*\.?\d+)"
_NUMERIC_PATTERNS = (
    re.compile(r"####\s*" + _NUM),
    re.compile(r"answer\s+is\s*:?\s*" + _NUM, re.IGNORECASE),
    re.compile(r"\\boxed\{\s*" + _NUM + r"\s*\}"),
)
_LETTER_PATTERNS = (
    re.compile(r"####\s*\(?([A-Ea-e])\)?(?![\w])"),
    re.compile(r"answer\s+is\s*:?\s*\(?([A-E])\)?(?![\w])", re.IGNORECASE),
    re.compile(r"\\boxed\{\s*\(?([A-E])\)?\s*\}"),
    re.compile(r"\(([A-E])\)"),
    re.compile(r"(?<![\w'])([A-E])(?![\w'])"),
)


def extract_answer(generated_text: str, task_kind: TaskKind | str,
                   choice_set: Sequence[tuple[str, str]] | None = None) -> AnswerLabel:
    """Map raw model output to a discrete label.

    Numeric: the last match of the highest-priority delimiter pattern present
    ("####", "answer is", ``\\boxed{}``), else the last standalone number.
    Multiple choice: the last option letter of the highest-priority pattern
    present, else a unique case-insensitive match of a choice's text.
    Anything else maps to the null label.
    """
    text = generated_text or ""
    kind = TaskKind(task_kind)
    if kind is TaskKind.NUMERIC:
        for pat in _NUMERIC_PATTERNS:
            hits = pat.findall(text)
            if hits:
                return normalize_numeric(hits[-1])
        hits = _NUMBER.findall(_THOUSANDS.sub("", _CURRENCY.sub("", text)))
        return normalize_numeric(hits[-1]) if hits else NULL

    valid = {normalize_letter(letter).value for letter, _ in choice_set} if choice_set else set(LETTERS)
    for pat in _LETTER_PATTERNS:
        hits = [h.upper() for h in pat.findall(text) if h.upper() in valid]
        if hits:
            return AnswerLabel("letter", hits[-1])
    if choice_set:
        low = text.lower()
        matched = [letter for letter, ctext in choice_set if ctext and ctext.lower() in low]
        if len(matched) == 1:
            return normalize_letter(matched[0])
    return NULL


# -- records ----------------------------------------------------------------------

@dataclass(frozen=True)
class QuestionInstance:
    id: str
    task_kind: TaskKind
    prompt_text: str
    gold_answer: AnswerLabel
    choice_set: tuple[tuple[str, str], ...] | None = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        if self.task_kind is TaskKind.MULTIPLE_CHOICE and not self.choice_set:
            raise DatasetError(f"question {self.id}: multiple choice requires a choice set")
        if self.choice_set is not None:
            object.__setattr__(self, "choice_set", tuple(tuple(c) for c in self.choice_set))


@dataclass
class TraceRecord:
    question_id: str
    trajectory_index: int
    tokens: list[str]
    final_answer: AnswerLabel
    is_correct: bool
    decoding_params: dict[str, Any]
    checkpoint_positions: list[int]
    seed: int
    failed: bool = False
    error: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.failed:
            pos = self.checkpoint_positions
            if pos != sorted(set(pos)) or not pos or pos[0] != 0 or pos[-1] != len(self.tokens):
                raise ValueError("checkpoints must be strictly increasing from 0 to the trace length")

    def to_json(self) -> str:
        d = asdict(self)
        d["final_answer"] = self.final_answer.key()
        return json.dumps({"schema": TRACE_SCHEMA, **d}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TraceRecord":
        d = json.loads(line)
        schema = d.pop("schema", None)
        if schema != TRACE_SCHEMA:
            raise DatasetError(f"expected schema {TRACE_SCHEMA}, found {schema!r}")
        d["final_answer"] = AnswerLabel.from_key(d["final_answer"])
        return cls(**d)


# -- empirical answer distributions ----------------------------------------------

@dataclass(frozen=True)
class EmpiricalAnswerDist:
    """Rollout answer counts with additive smoothing over a fixed support.

    The support is the observed labels plus the gold and null labels;
    ``mass(a) = (count(a) + alpha) / (n + alpha * |support|)``.
    """

    counts: dict[AnswerLabel, int]
    n: int
    smoothing_alpha: float
    support: tuple[AnswerLabel, ...]

    def mass(self, label: AnswerLabel) -> float:
        if label not in self.support:
            return 0.0
        denom = self.n + self.smoothing_alpha * len(self.support)
        return (self.counts.get(label, 0) + self.smoothing_alpha) / denom

    def masses(self) -> list[float]:
        return [self.mass(a) for a in self.support]

    def entropy(self) -> float:
        return -sum(p * math.log(p) for p in self.masses() if p > 0) + 0.0

    def surprisal(self, label: AnswerLabel) -> float:
        p = self.mass(label)
        return math.inf if p == 0 else -math.log(p)

    def with_alpha(self, alpha: float) -> "EmpiricalAnswerDist":
        return EmpiricalAnswerDist(self.counts, self.n, alpha, self.support)

    def to_dict(self) -> dict[str, Any]:
        return {"counts": {a.key(): c for a, c in sorted(self.counts.items())}, "n": self.n}


def empirical_distribution(labels: Iterable[AnswerLabel], alpha: float = 0.0,
                           gold: AnswerLabel | None = None) -> EmpiricalAnswerDist:
    labels = list(labels)
    if not labels:
        raise ValueError("empirical distribution needs at least one label")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    counts = Counter(labels)
    support = set(counts) | {NULL}
    if gold is not None:
        support.add(gold)
    return EmpiricalAnswerDist(dict(counts), len(labels), float(alpha), tuple(sorted(support)))


# -- datasets ------------------------------------------------------------------------

DATASET_FORMATS = ("gsm8k_jsonl", "arc_jsonl", "svamp_jsonl")


def _gsm8k(rec: dict, idx: int) -> QuestionInstance:
    answer = rec["answer"]
    gold = normalize_numeric(answer.rsplit("####", 1)[1]) if "####" in answer else normalize_numeric(answer)
    return QuestionInstance(str(rec.get("id", f"gsm8k-{idx}")), TaskKind.NUMERIC, rec["question"], gold)


def _arc(rec: dict, idx: int) -> QuestionInstance:
    q = rec["question"]
    if isinstance(q, dict):
        stem = q["stem"]
        raw = [(c["label"], c["text"]) for c in q["choices"]]
    else:
        stem = q
        ch = rec["choices"]
        raw = list(zip(ch["label"], ch["text"]))
    choices = []
    for pos, (label, text) in enumerate(raw):
        letter = normalize_letter(label)
        if letter.is_null:
            letter = AnswerLabel("letter", LETTERS[pos])
        choices.append((letter.value, text))
    key = str(rec["answerKey"])
    gold = normalize_letter(key)
    for (label, _), (letter, _) in zip(raw, choices):
        if str(label) == key:
            gold = AnswerLabel("letter", letter)
    prompt = stem + "\n" + "\n".join(f"{letter}. {text}" for letter, text in choices)
    return QuestionInstance(str(rec.get("id", f"arc-{idx}")), TaskKind.MULTIPLE_CHOICE, prompt, gold,
                            tuple(choices))


def _svamp(rec: dict, idx: int) -> QuestionInstance:
    body, question = rec.get("Body", ""), rec["Question"]
    prompt = f"{body.strip()} {question.strip()}".strip()
    return QuestionInstance(str(rec.get("ID", f"svamp-{idx}")), TaskKind.NUMERIC, prompt,
                            normalize_numeric(str(rec["Answer"])))


_LOADERS = {"gsm8k_jsonl": _gsm8k, "arc_jsonl": _arc, "svamp_jsonl": _svamp}


def load_dataset(path: str | Path, format: str) -> list[QuestionInstance]:
    """Read a JSONL benchmark file in file order with normalized gold answers."""
    if format not in _LOADERS:
        raise DatasetError(f"unknown dataset format {format!r}; expected one of {DATASET_FORMATS}")
    loader = _LOADERS[format]
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(loader(json.loads(line), len(out)))
            except (json.JSONDecodeError, KeyError, TypeError, IndexError, AttributeError) as e:
                raise DatasetError(f"{path}:{lineno}: malformed {format} record ({e!r})") from e
    return out
