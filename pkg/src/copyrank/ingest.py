"""Load, validate, and normalize A/B-test experiment tables.

Files arrive as CSV (header ``test_id,arm_id,text,impressions,clicks``) or
JSONL (one object per arm with the same field names). An optional boolean
column ``significant`` is honored when present: experiments marked
not-significant are skipped, since significance filtering is an upstream
concern. Rows sharing (test_id, arm_id) are merged by summing counts.
"""

from __future__ import annotations

import csv
import json
import sys
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import ParseError, UndefinedCtrError, ValidationError
from .ranks import fractional_ranks

CSV_COLUMNS = ("test_id", "arm_id", "text", "impressions", "clicks")

_TRUE_WORDS = {"true", "1", "yes", "t", "y"}
_FALSE_WORDS = {"false", "0", "no", "f", "n"}


def normalize_text(text: str) -> str:
    """NFC-normalize and collapse internal whitespace; embedding caches key on exact text."""
    return " ".join(unicodedata.normalize("NFC", text).split())


@dataclass(frozen=True)
class ArmRecord:
    arm_id: str
    text: str
    impressions: int
    clicks: int


@dataclass(frozen=True)
class ExperimentRecord:
    experiment_id: str
    arms: tuple[ArmRecord, ...]

    @property
    def observed_ctr(self) -> tuple[Optional[float], ...]:
        """Per-arm CTR fraction; None where impressions are zero."""
        return tuple(
            a.clicks / a.impressions if a.impressions > 0 else None for a in self.arms
        )


@dataclass(frozen=True)
class ExperimentSet:
    experiments: tuple[ExperimentRecord, ...]
    source_tag: str = ""

    def __iter__(self) -> Iterator[ExperimentRecord]:
        return iter(self.experiments)

    def __len__(self) -> int:
        return len(self.experiments)

    def all_texts(self) -> list[str]:
        return [arm.text for exp in self.experiments for arm in exp.arms]


def compute_ctr(arm: ArmRecord) -> float:
    """clicks/impressions as a fraction; the percent form is a display concern."""
    if arm.impressions <= 0:
        raise UndefinedCtrError(
            f"arm {arm.arm_id!r} has no impressions; CTR is undefined"
        )
    return arm.clicks / arm.impressions


def true_ranks(experiment: ExperimentRecord) -> np.ndarray:
    """Observed ranks, 1 = highest CTR, ties averaged."""
    ctrs = experiment.observed_ctr
    if any(c is None for c in ctrs):
        raise UndefinedCtrError(
            f"experiment {experiment.experiment_id!r} has arms with zero impressions"
        )
    return fractional_ranks(np.asarray(ctrs, dtype=float), descending=True)


def validate_arm(arm: ArmRecord, where: str = "") -> None:
    loc = f" ({where})" if where else ""
    if not arm.text:
        raise ValidationError(f"empty text after trimming{loc}")
    if arm.impressions < 0 or arm.clicks < 0:
        raise ValidationError(f"negative counts{loc}")
    if arm.clicks > arm.impressions:
        raise ValidationError(
            f"clicks ({arm.clicks}) exceed impressions ({arm.impressions}){loc}"
        )


def _parse_bool(raw: str, where: str) -> bool:
    word = raw.strip().lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise ParseError(f"unparseable boolean {raw!r} ({where})")


def _parse_count(raw, field: str, where: str) -> int:
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ParseError(f"non-integer {field} {raw!r} ({where})") from None
    return value


def _iter_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"{path}: missing required columns {missing}")
        for row in reader:
            yield reader.line_num, row


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
            if not isinstance(row, dict):
                raise ParseError(f"{path}: line {lineno}: expected an object per arm")
            missing = [c for c in CSV_COLUMNS if c not in row]
            if missing:
                raise ParseError(f"{path}: line {lineno}: missing fields {missing}")
            yield lineno, row


def load_experiments(
    path, format: Optional[str] = None, source_tag: Optional[str] = None
) -> ExperimentSet:
    """Load and validate an experiment table, grouping arms by test identifier.

    Duplicate (test_id, arm_id) rows are merged by summing impressions and
    clicks. Experiments with fewer than two arms, and experiments flagged
    ``significant = false``, are skipped; a summary of skips goes to stderr.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    if format not in ("csv", "jsonl"):
        raise ValidationError(f"unknown format {format!r}; expected csv or jsonl")
    rows = _iter_csv(path) if format == "csv" else _iter_jsonl(path)

    # experiment id -> arm id -> [text, impressions, clicks]; insertion order kept
    grouped: dict[str, dict[str, list]] = {}
    not_significant: set[str] = set()
    for lineno, row in rows:
        where = f"{path.name}: line {lineno}"
        test_id = str(row["test_id"]).strip()
        arm_id = str(row["arm_id"]).strip()
        if not test_id or not arm_id:
            raise ParseError(f"empty test_id/arm_id ({where})")
        text = normalize_text(str(row["text"]))
        impressions = _parse_count(row["impressions"], "impressions", where)
        clicks = _parse_count(row["clicks"], "clicks", where)
        validate_arm(
            ArmRecord(arm_id, text, impressions, clicks),
            where=f"{where}, test {test_id!r} arm {arm_id!r}",
        )
        sig_raw = row.get("significant")
        if sig_raw not in (None, ""):
            significant = (
                sig_raw if isinstance(sig_raw, bool) else _parse_bool(str(sig_raw), where)
            )
            if not significant:
                not_significant.add(test_id)

        arms = grouped.setdefault(test_id, {})
        if arm_id in arms:
            prior = arms[arm_id]
            if prior[0] != text:
                raise ValidationError(
                    f"conflicting text for test {test_id!r} arm {arm_id!r} ({where})"
                )
            prior[1] += impressions
            prior[2] += clicks
        else:
            arms[arm_id] = [text, impressions, clicks]

    experiments = []
    skipped_small = 0
    skipped_insignificant = 0
    for test_id, arms in grouped.items():
        if test_id in not_significant:
            skipped_insignificant += 1
            continue
        if len(arms) < 2:
            skipped_small += 1
            continue
        records = tuple(
            ArmRecord(arm_id, text, imp, clk)
            for arm_id, (text, imp, clk) in arms.items()
        )
        for arm in records:
            validate_arm(arm, where=f"test {test_id!r} arm {arm.arm_id!r} after merge")
        experiments.append(ExperimentRecord(test_id, records))

    if skipped_small or skipped_insignificant:
        print(
            f"{path.name}: skipped {skipped_small} experiment(s) with < 2 arms, "
            f"{skipped_insignificant} marked not significant",
            file=sys.stderr,
        )
    return ExperimentSet(tuple(experiments), source_tag=source_tag or path.stem)


def build_experiment(
    experiment_id: str, arms: Iterable[tuple[str, str, int, int]]
) -> ExperimentRecord:
    """Assemble a validated ExperimentRecord from (arm_id, text, impressions, clicks) tuples."""
    records = []
    seen = set()
    for arm_id, text, impressions, clicks in arms:
        if arm_id in seen:
            raise ValidationError(f"duplicate arm id {arm_id!r} in {experiment_id!r}")
        seen.add(arm_id)
        arm = ArmRecord(str(arm_id), normalize_text(text), int(impressions), int(clicks))
        validate_arm(arm, where=f"test {experiment_id!r} arm {arm_id!r}")
        records.append(arm)
    if len(records) < 2:
        raise ValidationError(f"experiment {experiment_id!r} needs at least 2 arms")
    return ExperimentRecord(str(experiment_id), tuple(records))
