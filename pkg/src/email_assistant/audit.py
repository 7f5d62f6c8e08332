"""Append-only per-email audit log, run report and time/accuracy metrics."""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .attachments import atomic_write_bytes
from .errors import ConfigSemantic, ConfigSyntax, IoFailure, ManifestMismatch

SECONDS_PER_EMAIL = 78.0

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def open_batch(clock: Clock = utc_now) -> str:
    stamp = clock().astimezone(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return f"B{stamp}-{secrets.token_hex(2)}"


def manual_baseline(n_emails: int, seconds_per_email: float = SECONDS_PER_EMAIL) -> float:
    """Seconds a person would need to triage ``n_emails`` by hand."""
    if n_emails < 0:
        raise ValueError("n_emails must be non-negative")
    return seconds_per_email * n_emails


def compute_speedup(baseline_seconds: float, elapsed_seconds: float) -> float | None:
    if baseline_seconds <= 0:
        raise ValueError("baseline_seconds must be positive")
    if elapsed_seconds <= 0:
        return None
    return baseline_seconds / elapsed_seconds


@dataclass
class AuditRecord:
    batch_id: str
    unique_id: str
    timestamp: str
    sender: str
    recipients: list[str]
    subject: str
    decision: dict
    source: str = ""
    message_id: str = ""
    actions: list[dict] = field(default_factory=list)
    attachment_records: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    logged_at: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


class AuditLog:
    """JSON-lines sink; each record is one ``write`` of one line."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self.records: list[dict] = []

    def append(self, record: AuditRecord | Mapping) -> None:
        data = record.to_dict() if isinstance(record, AuditRecord) else dict(record)
        line = json.dumps(data, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line)
                    fh.flush()
            except OSError as exc:
                raise IoFailure(f"cannot append to audit log {self.path}: {exc}") from exc
            self.records.append(data)


def read_audit_log(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class AccuracyResult:
    accuracy: float
    matched: int
    total: int
    mismatches: list[dict]


def record_outcome(record: Mapping) -> str:
    decision = record["decision"]
    return decision["label"] if decision["kind"] == "route" else decision["kind"]


def _manifest_key(record: Mapping, manifest: Mapping[str, str]) -> str | None:
    for key in (record.get("source"), record.get("message_id")):
        if key and key in manifest:
            return key
    return None


def evaluate_accuracy(records: Iterable[Mapping], manifest: Mapping[str, str]) -> AccuracyResult:
    """Compare each record's outcome with the expected label of its message.

    Expected labels are compared case-insensitively; ``trash`` and ``keep``
    stand for the two non-routing outcomes.
    """
    seen: dict[str, str] = {}
    for record in records:
        key = _manifest_key(record, manifest)
        if key is None:
            raise ManifestMismatch(
                f"message {record.get('source') or record.get('unique_id')!r} is not in the manifest"
            )
        seen[key] = record_outcome(record)
    mismatches = []
    matched = 0
    for key, expected in sorted(manifest.items()):
        actual = seen.get(key)
        if actual is not None and actual.casefold() == str(expected).casefold():
            matched += 1
        else:
            mismatches.append({"message": key, "expected": expected, "actual": actual})
    total = len(manifest)
    return AccuracyResult(matched / total if total else 1.0, matched, total, mismatches)


def load_manifest(path: Path) -> dict[str, str]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigSyntax(f"manifest {path} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigSemantic(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or not all(isinstance(v, str) for v in doc.values()):
        raise ConfigSemantic("manifest must map message file names to labels")
    return doc


@dataclass
class RunReport:
    batch_id: str
    fetched: int = 0
    routed_counts: dict[str, int] = field(default_factory=dict)
    trashed: int = 0
    kept: int = 0
    attachments_saved: int = 0
    elapsed_seconds: float = 0.0
    baseline_seconds: float = 0.0
    speedup: float | None = None
    errors: int = 0
    dry_run: bool = True
    drafts: int = 0
    accuracy: float | None = None
    mismatches: list[dict] | None = None

    def check_partition(self) -> None:
        total = sum(self.routed_counts.values()) + self.trashed + self.kept
        if total != self.fetched:
            raise AssertionError(f"partition identity violated: {total} != {self.fetched}")

    def to_dict(self) -> dict:
        data = asdict(self)
        for optional in ("speedup", "accuracy", "mismatches"):
            if data[optional] is None:
                del data[optional]
        return data


@dataclass
class BatchState:
    """Counters accumulated while one batch runs."""

    batch_id: str
    dry_run: bool = True
    fetched: int = 0
    routed_counts: dict[str, int] = field(default_factory=dict)
    trashed: int = 0
    kept: int = 0
    attachments_saved: int = 0
    drafts: int = 0
    errors: int = 0
    elapsed_seconds: float = 0.0

    def count_decision(self, outcome_kind: str, label: str | None = None) -> None:
        if outcome_kind == "route":
            self.routed_counts[label] = self.routed_counts.get(label, 0) + 1
        elif outcome_kind == "trash":
            self.trashed += 1
        else:
            self.kept += 1


def finalize_report(
    state: BatchState,
    report_dir: Path | None = None,
    *,
    seconds_per_email: float = SECONDS_PER_EMAIL,
    accuracy: AccuracyResult | None = None,
) -> RunReport:
    baseline = manual_baseline(state.fetched, seconds_per_email)
    report = RunReport(
        batch_id=state.batch_id,
        fetched=state.fetched,
        routed_counts=dict(sorted(state.routed_counts.items())),
        trashed=state.trashed,
        kept=state.kept,
        attachments_saved=state.attachments_saved,
        elapsed_seconds=state.elapsed_seconds,
        baseline_seconds=baseline,
        speedup=compute_speedup(baseline, state.elapsed_seconds) if baseline > 0 else None,
        errors=state.errors,
        dry_run=state.dry_run,
        drafts=state.drafts,
    )
    if accuracy is not None:
        report.accuracy = accuracy.accuracy
        report.mismatches = accuracy.mismatches
    report.check_partition()
    if report_dir is not None:
        payload = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        atomic_write_bytes(report_path(report_dir, state.batch_id), payload.encode())
    return report


def report_path(report_dir: Path, batch_id: str) -> Path:
    return Path(report_dir) / f"{batch_id}.report.json"


def audit_path(report_dir: Path, batch_id: str) -> Path:
    return Path(report_dir) / f"{batch_id}.audit.jsonl"


def trace_path(report_dir: Path, batch_id: str) -> Path:
    return Path(report_dir) / f"{batch_id}.imap-trace.log"


def write_trace(path: Path, lines: Iterable[str]) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write trace {path}: {exc}") from exc


__all__ = [
    "AccuracyResult",
    "AuditLog",
    "AuditRecord",
    "BatchState",
    "RunReport",
    "audit_path",
    "compute_speedup",
    "evaluate_accuracy",
    "finalize_report",
    "load_manifest",
    "manual_baseline",
    "open_batch",
    "read_audit_log",
    "record_outcome",
    "report_path",
    "trace_path",
    "utc_now",
    "write_trace",
]
