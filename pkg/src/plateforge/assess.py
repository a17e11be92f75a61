"""Phase-2 assessment: legibility/reading answers and the success predicate.

An attack counts as successful only when a reviewer says every character is
legible (Q1) and reads the plate as its original number (Q2).  Records are
append-only JSON lines with no personally identifiable information; the
simulated assessor lets batch suites run with a second, independent
recognizer standing in for the human.
"""

from __future__ import annotations

import csv
import json
import threading
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .core import LicenseLabel
from .oracle import DecisionOracle
from .plate import ThaiConsonantSet, is_valid

__all__ = [
    "AssessmentRecord",
    "AssessmentVerdict",
    "normalize_reading",
    "judge",
    "simulated_assessor",
    "asr",
    "RecordStore",
    "majority_verdict",
]

RECORD_SCHEMA_VERSION = 1


def normalize_reading(text: str) -> str:
    """Canonical form for Q2 comparison: drop all whitespace, Unicode NFC."""
    return unicodedata.normalize("NFC", "".join(text.split()))


@dataclass(frozen=True)
class AssessmentRecord:
    """One reviewer's answers for one adversarial example.

    ``q2_read`` is stored verbatim; the normalized form is derived, never
    entered.  ``assessor_id`` is an opaque string - no PII is kept.
    """

    outcome_id: str
    assessor_id: str
    q1_legible: bool
    q2_read: str
    timestamp: str = ""

    @property
    def q2_normalized(self) -> str:
        return normalize_reading(self.q2_read)

    def to_dict(self) -> dict:
        return {
            "version": RECORD_SCHEMA_VERSION,
            "outcome_id": self.outcome_id,
            "assessor_id": self.assessor_id,
            "q1_legible": self.q1_legible,
            "q2_read": self.q2_read,
            "q2_normalized": self.q2_normalized,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssessmentRecord":
        return cls(
            outcome_id=d["outcome_id"],
            assessor_id=d["assessor_id"],
            q1_legible=bool(d["q1_legible"]),
            q2_read=d["q2_read"],
            timestamp=d.get("timestamp", ""),
        )


@dataclass(frozen=True)
class AssessmentVerdict:
    outcome_id: str
    success: bool
    reason: str  # q1_no | q2_mismatch | pass


def judge(record: AssessmentRecord, orig: LicenseLabel) -> AssessmentVerdict:
    """Apply the success predicate: Q1 yes and normalized Q2 equals the
    original number.  Pure and order-independent."""
    if not record.q1_legible:
        return AssessmentVerdict(record.outcome_id, False, "q1_no")
    if record.q2_normalized != str(orig):
        return AssessmentVerdict(record.outcome_id, False, "q2_mismatch")
    return AssessmentVerdict(record.outcome_id, True, "pass")


def simulated_assessor(
    outcome,
    reference: DecisionOracle,
    consonants: ThaiConsonantSet | None = None,
    assessor_id: str = "simulated",
) -> AssessmentRecord:
    """Let an independent recognizer play the participant.

    The reference oracle must differ from the attacked one (other variant or
    configuration).  Q1 becomes "the reference read a well-formed license
    number", Q2 is the reference's reading, verbatim.
    """
    image = outcome.selected_image
    if image is None:
        raise ValueError(f"outcome {outcome.outcome_id} has no adversarial example")
    reading = reference.classify(image)
    return AssessmentRecord(
        outcome_id=outcome.outcome_id,
        assessor_id=assessor_id,
        q1_legible=is_valid(reading, consonants),
        q2_read=reading,
        timestamp=_now_iso(),
    )


def asr(verdicts) -> float:
    """Attack success rate: successes / total."""
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("cannot compute ASR over an empty verdict list")
    return sum(1 for v in verdicts if v.success) / len(verdicts)


def majority_verdict(verdicts) -> AssessmentVerdict:
    """Aggregate one outcome's verdicts by strict majority (off by default
    in the pipeline; provided for multi-assessor studies)."""
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("no verdicts to aggregate")
    ids = {v.outcome_id for v in verdicts}
    if len(ids) != 1:
        raise ValueError(f"verdicts span multiple outcomes: {sorted(ids)}")
    wins = sum(1 for v in verdicts if v.success)
    success = wins * 2 > len(verdicts)
    if success:
        return AssessmentVerdict(verdicts[0].outcome_id, True, "pass")
    reasons = [v.reason for v in verdicts if not v.success]
    return AssessmentVerdict(verdicts[0].outcome_id, False, reasons[0])


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class RecordStore:
    """Append-only JSONL store of assessment records.

    Appends are serialized; reads return immutable snapshots.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: AssessmentRecord) -> None:
        line = json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def load(self) -> list:
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(AssessmentRecord.from_dict(json.loads(line)))
        return records

    def judge_all(self, originals: dict) -> list:
        """Verdicts for every stored record; ``originals`` maps outcome id
        to its original label.  Unknown outcome ids are an error."""
        verdicts = []
        for rec in self.load():
            if rec.outcome_id not in originals:
                raise KeyError(f"unknown outcome id {rec.outcome_id!r}")
            verdicts.append(judge(rec, originals[rec.outcome_id]))
        return verdicts

    def export_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["outcome_id", "assessor_id", "q1_legible", "q2_read",
                 "q2_normalized", "timestamp"]
            )
            for r in self.load():
                writer.writerow(
                    [r.outcome_id, r.assessor_id, int(r.q1_legible), r.q2_read,
                     r.q2_normalized, r.timestamp]
                )
