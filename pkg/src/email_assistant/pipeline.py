"""The triage loop: fetch, log, classify, act, file attachments, report."""

from __future__ import annotations

import logging
import time
from collections import defaultdict
from pathlib import Path
from typing import Callable

from .attachments import (
    DirectoryLayout,
    SavedFileRecord,
    candidate_name,
    draft_interview_invitation,
    invitation_filename,
    render_rename,
    resolve_collision,
    sanitize_filename,
    sha256_hex,
    write_attachment,
)
from .audit import (
    AuditLog,
    AuditRecord,
    BatchState,
    Clock,
    RunReport,
    audit_path,
    evaluate_accuracy,
    finalize_report,
    load_manifest,
    open_batch,
    trace_path,
    utc_now,
    write_trace,
)
from .config import AppConfig
from .errors import ActionFailure, IoFailure, MalformedMessage, ManifestMismatch
from .mailstore import Credentials, MessageHandle, StoreAction, StoreSession, connect_and_authenticate
from .message_model import Attachment, ParsedMessage, RawMessage, normalize_text, parse_message
from .rules import (
    Decision,
    RuleBundle,
    classify_attachment_useful,
    classify_message,
    screen_eligibility,
)

log = logging.getLogger(__name__)

SessionFactory = Callable[[AppConfig, Credentials | None], StoreSession]


def _default_session(cfg: AppConfig, creds: Credentials | None) -> StoreSession:
    return connect_and_authenticate(cfg.store, creds)


class _Run:
    """State of one batch while it is being processed."""

    def __init__(self, cfg: AppConfig, rules: RuleBundle, batch_id: str, session: StoreSession) -> None:
        self.cfg = cfg
        self.rules = rules
        self.batch_id = batch_id
        self.session = session
        self.layout = DirectoryLayout(Path(cfg.layout_root), tuple(rules.attachment_rules.folders))
        self.state = BatchState(batch_id, dry_run=cfg.dry_run)
        self.audit = AuditLog(audit_path(cfg.report_dir, batch_id))
        # names planned per directory in this batch, so dry runs resolve collisions like real ones
        self.reserved: dict[Path, set[str]] = defaultdict(set)

    # store actions

    def _act(self, action: StoreAction, outcomes: list[dict]) -> bool:
        entry = {"action": action.kind, "target": action.target}
        if self.cfg.dry_run:
            outcomes.append({**entry, "status": "planned"})
            return True
        try:
            ack = self.session.apply_action(action)
        except ActionFailure as exc:
            log.warning("%s failed for %s: %s", action.kind, action.handle.store_uid, exc)
            self.state.errors += 1
            outcomes.append({**entry, "status": "failed", "detail": str(exc)})
            return False
        outcomes.append({**entry, "status": "ok", "detail": ack})
        return True

    def _store_action(self, decision: Decision, handle: MessageHandle) -> StoreAction | None:
        if decision.kind == "route":
            return StoreAction("move_to_label", handle, decision.label)
        if decision.kind == "trash":
            return StoreAction("move_to_trash", handle, self.cfg.store.trash_folder)
        return None

    # attachments

    def _target_name(self, msg: ParsedMessage, att: Attachment, subfolder: str | None) -> str:
        if subfolder is not None and subfolder == self.rules.attachment_rules.resume_folder:
            return render_rename(
                self.cfg.rename_template,
                candidate_name(msg),
                self.cfg.highest_qualification,
                msg.date.date(),
                att.extension,
            )
        return sanitize_filename(att.filename)

    def _file_attachment(self, msg: ParsedMessage, att: Attachment, warnings: list[str]) -> dict:
        arules = self.rules.attachment_rules
        subject = normalize_text(msg.subject).text
        useful, subfolder = classify_attachment_useful(att, subject, arules)
        category = (subfolder or "Useful") if useful else "NotUseful"
        eligibility = screen_eligibility(att, arules, subfolder) if useful else "not_applicable"
        entry = {
            "original_filename": att.filename,
            "media_type": att.media_type,
            "category": category,
            "eligibility": eligibility,
        }
        if not useful and not self.cfg.save_not_useful:
            return {**entry, "status": "skipped"}

        directory = self.layout.dir_for(useful, subfolder)
        try:
            name = resolve_collision(directory, self._target_name(msg, att, subfolder), self.reserved[directory])
        except IoFailure as exc:
            self.state.errors += 1
            warnings.append(f"attachment {att.filename!r}: {exc}")
            return {**entry, "status": "failed", "detail": str(exc)}
        self.reserved[directory].add(name)

        if self.cfg.dry_run:
            record = SavedFileRecord(msg.unique_id, att.filename, str(directory / name),
                                     sha256_hex(att.decoded_bytes), len(att.decoded_bytes), category)
            status = "planned"
        else:
            try:
                record = write_attachment(att, directory, name, message_unique_id=msg.unique_id, category=category)
            except IoFailure as exc:
                self.state.errors += 1
                warnings.append(f"attachment {att.filename!r}: {exc}")
                return {**entry, "status": "failed", "detail": str(exc)}
            status = "saved"
        self.state.attachments_saved += 1
        return {**entry, **record.to_dict(), "status": status}

    def _draft(self, msg: ParsedMessage, outcomes: list[dict], warnings: list[str]) -> None:
        inv = self.cfg.invitations
        outbox = self.layout.outbox_dir
        if self.cfg.dry_run:
            planned = resolve_collision(outbox, invitation_filename(msg), self.reserved[outbox])
            self.reserved[outbox].add(planned)
            outcomes.append({"action": "draft_invitation", "target": str(outbox / planned), "status": "planned"})
            self.state.drafts += 1
            return
        try:
            path = draft_interview_invitation(msg, outbox, inv.subject, inv.body, inv.from_address)
        except IoFailure as exc:
            self.state.errors += 1
            warnings.append(f"invitation draft: {exc}")
            outcomes.append({"action": "draft_invitation", "target": str(outbox), "status": "failed"})
            return
        outcomes.append({"action": "draft_invitation", "target": str(path), "status": "ok"})
        self.state.drafts += 1

    # one message

    def process(self, seq: int, handle: MessageHandle, raw: RawMessage) -> None:
        warnings: list[str] = []
        actions: list[dict] = []
        files: list[dict] = []
        try:
            msg = parse_message(raw, seq, self.batch_id)
        except MalformedMessage as exc:
            # left unseen and untouched for a human to look at
            self.state.errors += 1
            self.state.count_decision("keep")
            self.audit.append(AuditRecord(
                batch_id=self.batch_id,
                unique_id=f"{self.batch_id}-{seq:06d}",
                timestamp=raw.received_at.isoformat() if raw.received_at else "",
                sender="", recipients=[], subject="",
                decision=Decision("keep", "default").to_dict(),
                source=handle.store_uid,
                warnings=[f"malformed message: {exc}"],
                logged_at=utc_now().isoformat(),
            ))
            return
        warnings.extend(msg.warnings)

        decision = classify_message(msg, self.rules.ruleset, self.rules.blocklist)
        self.state.count_decision(decision.kind, decision.label)

        action = self._store_action(decision, handle)
        moved = self._act(action, actions) if action is not None else True

        if decision.kind == "route" and moved:
            for att in msg.attachments:
                files.append(self._file_attachment(msg, att, warnings))
            eligible = any(f["eligibility"] == "eligible" and f["status"] in ("saved", "planned") for f in files)
            if eligible and self.cfg.invitations.enabled:
                self._draft(msg, actions, warnings)

        if action is None:
            self._act(StoreAction("mark_seen", handle), actions)

        self.audit.append(AuditRecord(
            batch_id=self.batch_id,
            unique_id=msg.unique_id,
            timestamp=msg.date.isoformat(),
            sender=msg.sender,
            recipients=list(msg.recipients),
            subject=msg.subject,
            decision=decision.to_dict(),
            source=handle.store_uid,
            message_id=msg.message_id,
            actions=actions,
            attachment_records=files,
            warnings=warnings,
            logged_at=utc_now().isoformat(),
        ))


def run_pipeline(
    cfg: AppConfig,
    creds: Credentials | None = None,
    *,
    clock: Clock = utc_now,
    session_factory: SessionFactory = _default_session,
    rules: RuleBundle | None = None,
) -> RunReport:
    """Process one batch of unseen mail and return its report.

    Connection, authentication and fetch errors propagate; per-message store
    and filesystem failures are logged, counted in ``errors`` and skipped.
    """
    rules = rules or cfg.load_rules()
    manifest = load_manifest(cfg.manifest_path) if cfg.manifest_path else None
    batch_id = open_batch(clock)
    session = session_factory(cfg, creds)
    run = _Run(cfg, rules, batch_id, session)
    try:
        session.select_folder(cfg.store.mail_folder)
        started = time.perf_counter()
        fetched = session.fetch_unseen_top(cfg.store.top)
        run.state.fetched = len(fetched)
        for seq, (handle, raw) in enumerate(fetched):
            run.process(seq, handle, raw)
        run.state.elapsed_seconds = time.perf_counter() - started
    finally:
        session.close()
        trace = getattr(session, "trace", None)
        if trace is not None:
            write_trace(trace_path(cfg.report_dir, batch_id), trace)

    accuracy = None
    if manifest is not None:
        try:
            accuracy = evaluate_accuracy(run.audit.records, manifest)
        except ManifestMismatch as exc:
            log.warning("accuracy not evaluated: %s", exc)
            run.state.errors += 1
    report = finalize_report(
        run.state,
        cfg.report_dir,
        seconds_per_email=cfg.seconds_per_email,
        accuracy=accuracy,
    )
    log.info(
        "batch %s: fetched %d, routed %s, trashed %d, kept %d, errors %d",
        batch_id, report.fetched, report.routed_counts, report.trashed, report.kept, report.errors,
    )
    return report
