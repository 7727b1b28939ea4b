"""Conversation transcript data model, parsing, validation, and statistics.

Transcripts are line-delimited JSON (one turn per line) with the required
keys ``conversation_id``, ``turn_index``, ``speaker``, ``timestamp_s``,
``text``, ``labels``. Unknown keys are preserved on round trip. Files may
interleave conversations; ordering within a conversation is by turn_index.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

PARTICIPANT = "participant"
ASSISTANT = "assistant"
SPEAKERS = (PARTICIPANT, ASSISTANT)

_LABEL_RE = re.compile(r"^[a-z][a-z0-9]*$")

_REQUIRED_KEYS = ("conversation_id", "turn_index", "speaker", "timestamp_s", "text", "labels")


class TranscriptError(ValueError):
    """A transcript record that cannot be parsed, with its source location."""

    def __init__(self, message: str, source: str = "<stream>", line_no: int | None = None):
        self.source = source
        self.line_no = line_no
        where = source if line_no is None else f"{source}:{line_no}"
        super().__init__(f"{where}: {message}")


class CatalogError(ValueError):
    """An invalid label catalog."""


@dataclass(frozen=True)
class LabelCatalog:
    """The closed set of speech-act label names in force for a run.

    ``labels`` is ordered (it fixes report row order); ``excluded`` names
    labels that are legal in transcripts but dropped from modeling.
    """

    labels: tuple[str, ...]
    excluded: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.labels:
            raise CatalogError("catalog has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise CatalogError("catalog labels contain duplicates")
        overlap = set(self.labels) & self.excluded
        if overlap:
            raise CatalogError(f"labels also listed as excluded: {sorted(overlap)}")
        for name in list(self.labels) + sorted(self.excluded):
            if not _LABEL_RE.match(name):
                raise CatalogError(f"invalid label name {name!r} (want lowercase [a-z][a-z0-9]*)")

    @property
    def label_set(self) -> frozenset[str]:
        return frozenset(self.labels)

    def allows(self, name: str) -> bool:
        return name in self.label_set or name in self.excluded

    @staticmethod
    def default() -> "LabelCatalog":
        """The bundled participant-side catalog (see data/default_catalog.json)."""
        raw = resources.files("speechacts.data").joinpath("default_catalog.json").read_text("utf-8")
        return catalog_from_dict(json.loads(raw))


def catalog_from_dict(obj: dict) -> LabelCatalog:
    if not isinstance(obj, dict) or "labels" not in obj:
        raise CatalogError("catalog must be an object with a 'labels' array")
    labels = obj["labels"]
    excluded = obj.get("excluded", [])
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise CatalogError("'labels' must be an array of strings")
    if not isinstance(excluded, list) or not all(isinstance(x, str) for x in excluded):
        raise CatalogError("'excluded' must be an array of strings")
    return LabelCatalog(
        labels=tuple(x.lower() for x in labels),
        excluded=frozenset(x.lower() for x in excluded),
    )


def load_catalog(path: Union[str, Path]) -> LabelCatalog:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"{path}: not valid JSON ({exc})") from exc
    return catalog_from_dict(obj)


@dataclass
class Turn:
    """One chat message: who said what, when, and its speech-act labels."""

    conversation_id: str
    turn_index: int
    speaker: str
    timestamp_s: float
    text: str
    labels: frozenset[str] = frozenset()
    extra: dict = field(default_factory=dict)  # unknown record keys, kept for round trip


@dataclass
class Conversation:
    conversation_id: str
    turns: list[Turn]


@dataclass(frozen=True)
class Violation:
    conversation_id: str
    turn_index: int | None
    invariant: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class CorpusStats:
    conversation_count: int
    turn_count: int
    label_counts: dict[str, int]
    excluded_label_counts: dict[str, int]
    per_speaker_turn_counts: dict[str, int]


@dataclass
class ModelingExample:
    """A participant turn selected for training, with its conversation context."""

    conversation: Conversation
    turn_index: int
    labels: frozenset[str]  # catalog labels only (excluded labels stripped)

    @property
    def turn(self) -> Turn:
        return self.conversation.turns[self.turn_index]


def _parse_record(line: str, source: str, line_no: int, catalog: LabelCatalog) -> Turn:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TranscriptError(f"not valid JSON ({exc.msg})", source, line_no) from exc
    if not isinstance(obj, dict):
        raise TranscriptError("record is not an object", source, line_no)
    missing = [k for k in _REQUIRED_KEYS if k not in obj]
    if missing:
        raise TranscriptError(f"missing keys {missing}", source, line_no)

    cid = obj["conversation_id"]
    if not isinstance(cid, str) or not cid:
        raise TranscriptError("conversation_id must be a non-empty string", source, line_no)
    idx = obj["turn_index"]
    if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
        raise TranscriptError("turn_index must be a non-negative integer", source, line_no)
    speaker = obj["speaker"]
    if speaker not in SPEAKERS:
        raise TranscriptError(f"unknown speaker {speaker!r}", source, line_no)
    ts = obj["timestamp_s"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts < 0:
        raise TranscriptError("timestamp_s must be a number >= 0", source, line_no)
    text = obj["text"]
    if not isinstance(text, str):
        raise TranscriptError("text must be a string", source, line_no)
    raw_labels = obj["labels"]
    if not isinstance(raw_labels, list) or not all(isinstance(x, str) for x in raw_labels):
        raise TranscriptError("labels must be an array of strings", source, line_no)
    labels = frozenset(x.lower() for x in raw_labels)
    unknown = sorted(x for x in labels if not catalog.allows(x))
    if unknown:
        raise TranscriptError(f"labels not in catalog or excluded set: {unknown}", source, line_no)

    extra = {k: v for k, v in obj.items() if k not in _REQUIRED_KEYS}
    return Turn(cid, idx, speaker, float(ts), text, labels, extra)


def _iter_lines(stream: Union[IO, Iterable]) -> Iterator[str]:
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw


def _group(records: list[tuple[Turn, str, int]]) -> list[Conversation]:
    by_id: dict[str, list[tuple[Turn, str, int]]] = {}
    for rec in records:
        by_id.setdefault(rec[0].conversation_id, []).append(rec)
    conversations = []
    for cid, recs in by_id.items():  # insertion order = first appearance
        seen: dict[int, tuple[str, int]] = {}
        for turn, source, line_no in recs:
            if turn.turn_index in seen:
                raise TranscriptError(
                    f"duplicate turn ({cid}, {turn.turn_index}), first seen at "
                    f"{seen[turn.turn_index][0]}:{seen[turn.turn_index][1]}",
                    source,
                    line_no,
                )
            seen[turn.turn_index] = (source, line_no)
        turns = sorted((r[0] for r in recs), key=lambda t: t.turn_index)
        conversations.append(Conversation(cid, turns))
    return conversations


def parse_transcripts(
    stream: Union[IO, Iterable], catalog: LabelCatalog, source: str = "<stream>"
) -> list[Conversation]:
    """Parse one line-delimited transcript stream into conversations.

    Raises TranscriptError (naming the offending line) on malformed records,
    unknown speakers, out-of-catalog labels, or duplicate (conversation_id,
    turn_index) pairs. Structural invariants that are a matter of data
    quality rather than parseability are left to :func:`validate`.
    """
    records = []
    for line_no, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        records.append((_parse_record(line, source, line_no, catalog), source, line_no))
    return _group(records)


def load_transcripts(paths: Iterable[Union[str, Path]], catalog: LabelCatalog) -> list[Conversation]:
    """Parse several transcript files; conversations may span files."""
    records = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                records.append((_parse_record(line, str(path), line_no, catalog), str(path), line_no))
    return _group(records)


def serialize_transcripts(conversations: Iterable[Conversation]) -> str:
    """Render conversations back to the line-delimited transcript format."""
    lines = []
    for conv in conversations:
        for turn in conv.turns:
            rec = {
                "conversation_id": turn.conversation_id,
                "turn_index": turn.turn_index,
                "speaker": turn.speaker,
                "timestamp_s": turn.timestamp_s,
                "text": turn.text,
                "labels": sorted(turn.labels),
            }
            rec.update(turn.extra)
            lines.append(json.dumps(rec, ensure_ascii=True, sort_keys=False))
    return "\n".join(lines) + ("\n" if lines else "")


def validate(conversations: Iterable[Conversation]) -> ValidationReport:
    """Check the structural invariants; violations are data, not failures."""
    report = ValidationReport()

    def flag(cid, idx, invariant, message):
        report.violations.append(Violation(cid, idx, invariant, message))

    for conv in conversations:
        prev_ts = None
        for position, turn in enumerate(conv.turns):
            if turn.conversation_id != conv.conversation_id:
                flag(conv.conversation_id, turn.turn_index, "conversation_id",
                     f"turn carries conversation_id {turn.conversation_id!r}")
            if turn.turn_index != position:
                flag(conv.conversation_id, turn.turn_index, "contiguous_index",
                     f"expected turn_index {position}, found {turn.turn_index}")
            if prev_ts is not None and turn.timestamp_s < prev_ts:
                flag(conv.conversation_id, turn.turn_index, "monotone_timestamp",
                     f"timestamp_s {turn.timestamp_s} precedes previous {prev_ts}")
            prev_ts = turn.timestamp_s
            if not turn.text.strip():
                flag(conv.conversation_id, turn.turn_index, "empty_text",
                     "text is empty after trimming whitespace")
    return report


def corpus_stats(conversations: Iterable[Conversation], catalog: LabelCatalog) -> CorpusStats:
    """Count turns, speakers, and (turn, label) pairs; excluded labels separately."""
    label_counts = {name: 0 for name in catalog.labels}
    excluded_counts = {name: 0 for name in sorted(catalog.excluded)}
    speaker_counts = {name: 0 for name in SPEAKERS}
    n_conv = 0
    n_turns = 0
    for conv in conversations:
        n_conv += 1
        for turn in conv.turns:
            n_turns += 1
            speaker_counts[turn.speaker] = speaker_counts.get(turn.speaker, 0) + 1
            for label in turn.labels:
                if label in label_counts:
                    label_counts[label] += 1
                else:
                    excluded_counts[label] = excluded_counts.get(label, 0) + 1
    return CorpusStats(n_conv, n_turns, label_counts, excluded_counts, speaker_counts)


def select_examples(
    conversations: Iterable[Conversation], catalog: LabelCatalog
) -> list[tuple[str, int]]:
    """Pick the turns usable for modeling, in corpus order.

    A turn qualifies when the participant spoke it and it carries at least
    one non-excluded catalog label.
    """
    selected = []
    for conv in conversations:
        for turn in conv.turns:
            if turn.speaker != PARTICIPANT:
                continue
            if turn.labels & catalog.label_set:
                selected.append((conv.conversation_id, turn.turn_index))
    return selected


def modeling_examples(
    conversations: Iterable[Conversation], catalog: LabelCatalog
) -> list[ModelingExample]:
    """Resolve :func:`select_examples` ids to examples with context attached."""
    conversations = list(conversations)
    by_id = {conv.conversation_id: conv for conv in conversations}
    chosen = select_examples(conversations, catalog)
    return [
        ModelingExample(by_id[cid], idx, by_id[cid].turns[idx].labels & catalog.label_set)
        for cid, idx in chosen
    ]


def offsets_from_absolute(conversations: Iterable[Conversation]) -> list[Conversation]:
    """Rebase absolute (e.g. epoch) timestamps to seconds from conversation start.

    Converter helper for corpora exported with wall-clock times: subtracts
    each conversation's first timestamp from every turn.
    """
    rebased = []
    for conv in conversations:
        if not conv.turns:
            rebased.append(Conversation(conv.conversation_id, []))
            continue
        t0 = conv.turns[0].timestamp_s
        turns = [
            Turn(t.conversation_id, t.turn_index, t.speaker, t.timestamp_s - t0,
                 t.text, t.labels, dict(t.extra))
            for t in conv.turns
        ]
        rebased.append(Conversation(conv.conversation_id, turns))
    return rebased
