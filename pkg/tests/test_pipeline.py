from __future__ import annotations

import hashlib
import itertools
import json
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tree_digest, workflow_config
from email_assistant.audit import read_audit_log
from email_assistant.config import load_config
from email_assistant.errors import ActionFailure, FetchFailure
from email_assistant.fixtures import WORKFLOW_MAILS
from email_assistant.mailstore import FolderSummary, MessageHandle
from email_assistant.message_model import RawMessage
from email_assistant.mailstore.fixture import FixtureSession
from email_assistant.pipeline import run_pipeline
from email_assistant.rules import load_ruleset


def audit_of(report, cfg) -> list[dict]:
    return read_audit_log(cfg.report_dir / f"{report.batch_id}.audit.jsonl")


def test_execute_run_files_everything(workflow):
    paths, work = workflow
    cfg = workflow_config(paths, work, execute=True)
    report = run_pipeline(cfg)
    assert report.fetched == 9 and report.errors == 0
    assert report.drafts == 1
    records = audit_of(report, cfg)
    assert len(records) == 9
    saved = [f for r in records for f in r["attachment_records"]]
    assert len(saved) == 6
    for f in saved:
        path = Path(f["saved_path"])
        # placement agrees with the recorded category
        assert path.parent == cfg.layout_root / "Useful" / f["category"]
        assert f["sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
    drafts = list((cfg.layout_root / "Outbox").iterdir())
    assert len(drafts) == 1
    assert b"To: jane.roe@applicants.test" in drafts[0].read_bytes()


def test_audit_order_follows_fetch_order(workflow):
    paths, work = workflow
    cfg = workflow_config(paths, work)
    session = FixtureSession(paths["mailbox"])
    session.select_folder("Inbox")
    expected = [h.store_uid for h, _ in session.fetch_unseen_top(9)]
    records = audit_of(run_pipeline(cfg), cfg)
    assert [r["source"] for r in records] == expected
    assert [r["unique_id"][-6:] for r in records] == [f"{i:06d}" for i in range(9)]
    assert len({r["batch_id"] for r in records}) == 1


def test_dry_run_matches_execute_counts(workflow):
    paths, work = workflow
    dry = run_pipeline(workflow_config(paths, work))
    wet = run_pipeline(workflow_config(paths, work, execute=True))
    keys = ("fetched", "routed_counts", "trashed", "kept", "attachments_saved", "drafts", "errors", "accuracy")
    assert {k: getattr(dry, k) for k in keys} == {k: getattr(wet, k) for k in keys}
    assert dry.dry_run and not wet.dry_run


def test_dry_run_plans_the_same_paths(workflow):
    paths, work = workflow
    dry_cfg = workflow_config(paths, work)
    planned = sorted(f["saved_path"] for r in audit_of(run_pipeline(dry_cfg), dry_cfg) for f in r["attachment_records"])
    wet_cfg = workflow_config(paths, work, execute=True)
    saved = sorted(f["saved_path"] for r in audit_of(run_pipeline(wet_cfg), wet_cfg) for f in r["attachment_records"])
    assert planned == saved


def test_existing_files_are_never_overwritten(workflow):
    paths, work = workflow
    cfg = workflow_config(paths, work, execute=True)
    existing = cfg.layout_root / "Useful" / "Bills" / "statement.txt"
    existing.parent.mkdir(parents=True)
    existing.write_bytes(b"older statement")
    before = tree_digest(cfg.layout_root)
    run_pipeline(cfg)
    after = tree_digest(cfg.layout_root)
    assert {k: after[k] for k in before} == before
    assert "Useful/Bills/statement (1).txt" in after


def test_second_execute_run_fetches_nothing(workflow):
    paths, work = workflow
    run_pipeline(workflow_config(paths, work, execute=True))
    second = run_pipeline(workflow_config(paths, work, execute=True, manifest_path=None))
    assert second.fetched == 0 and second.speedup is None and second.errors == 0


def test_keep_default_marks_seen(workflow):
    paths, work = workflow
    rules = json.loads(paths["rules"].read_text())
    rules["default_action"] = "keep"
    paths["rules"].write_text(json.dumps(rules))
    cfg = workflow_config(paths, work, execute=True, manifest_path=None)
    report = run_pipeline(cfg)
    assert report.kept == 2 and report.trashed == 1  # the blocklisted sender is still trashed
    assert len(list((paths["mailbox"] / "Inbox" / "cur").iterdir())) == 2
    assert run_pipeline(cfg).fetched == 0


def test_malformed_message_is_kept_unseen(workflow):
    paths, work = workflow
    (paths["mailbox"] / "Inbox" / "new" / "00-garbage.eml").write_bytes(b"no headers at all\r\n\r\n...")
    cfg = workflow_config(paths, work, execute=True, manifest_path=None, top=20)
    report = run_pipeline(cfg)
    assert report.fetched == 10 and report.kept == 1 and report.errors == 1
    assert (paths["mailbox"] / "Inbox" / "new" / "00-garbage.eml").exists()
    bad = [r for r in audit_of(report, cfg) if r["source"] == "00-garbage.eml"][0]
    assert bad["decision"]["kind"] == "keep" and bad["warnings"]


def test_action_failure_is_counted_and_run_continues(workflow, monkeypatch):
    paths, work = workflow
    original = FixtureSession.apply_action

    def flaky(self, action):
        if action.handle.store_uid.startswith("01"):
            raise ActionFailure("rejected")
        return original(self, action)

    monkeypatch.setattr(FixtureSession, "apply_action", flaky)
    cfg = workflow_config(paths, work, execute=True)
    report = run_pipeline(cfg)
    assert report.errors == 1
    assert report.routed_counts == {"Receipt": 3, "Work": 3}
    assert len(list((paths["mailbox"] / "Work" / "cur").iterdir())) == 2
    # no attachment is filed for a message whose move failed
    assert report.attachments_saved == 5


def test_fetch_failure_aborts(workflow, monkeypatch):
    paths, work = workflow

    def broken(self, top):
        raise FetchFailure("connection dropped")

    monkeypatch.setattr(FixtureSession, "fetch_unseen_top", broken)
    with pytest.raises(FetchFailure):
        run_pipeline(workflow_config(paths, work, execute=True))
    assert len(list((paths["mailbox"] / "Inbox" / "new").iterdir())) == 9


def test_manifest_missing_a_message(workflow):
    paths, work = workflow
    manifest = json.loads(paths["manifest"].read_text())
    manifest.pop(WORKFLOW_MAILS[0].name)
    paths["manifest"].write_text(json.dumps(manifest))
    report = run_pipeline(workflow_config(paths, work))
    assert report.accuracy is None and report.errors == 1


def test_accuracy_matches_brute_force_scan(workflow):
    """Expected labels recomputed by scanning raw subjects, independent of the engine."""
    paths, work = workflow
    rules = json.loads(paths["rules"].read_text())
    blocked = {l.strip().lower() for l in paths["blocklist"].read_text().splitlines() if l.strip() and not l.startswith("#")}
    expected = {}
    for m in WORKFLOW_MAILS:
        addr = m.sender.split("<")[-1].rstrip(">").lower()
        label = "trash"
        if addr not in blocked:
            for r in sorted(rules["rules"], key=lambda r: r["priority"]):
                if any(k in m.subject.lower() for k in r["keywords"]):
                    label = r["label"]
                    break
        expected[m.name] = label
    assert expected == {m.name: m.expected for m in WORKFLOW_MAILS}
    assert run_pipeline(workflow_config(paths, work)).accuracy == 1.0


# partition identity over random batches

class MemorySession:
    def __init__(self, raws: list[bytes]) -> None:
        self.raws = raws

    def select_folder(self, folder):
        return FolderSummary(len(self.raws), len(self.raws))

    def fetch_unseen_top(self, top):
        out = []
        for i, data in enumerate(self.raws[:top]):
            h = MessageHandle(str(i + 1), "Inbox")
            out.append((h, RawMessage(data, h, datetime(2022, 1, 1, tzinfo=timezone.utc))))
        return out

    def apply_action(self, action):
        return "OK"

    def close(self):
        pass


_WORDS = ["resume", "Bill", "INVOICE", "hello", "cruise", "offer", "cv", "news", "=?x?", "<b>", "\t"]
_tick = itertools.count()


def _clock():
    return datetime(2030, 1, 1, tzinfo=timezone.utc) + timedelta(seconds=next(_tick))


_mail = st.one_of(
    st.builds(
        lambda words, blocked, junk: (
            f"From: {'offers@spam-blast.test' if blocked else 'a@x.test'}\r\n"
            f"Subject: {' '.join(words)}{junk}\r\n\r\nbody"
        ).encode(),
        st.lists(st.sampled_from(_WORDS), max_size=5),
        st.booleans(),
        st.text(alphabet="abcXYZ ", max_size=5),
    ),
    st.sampled_from([b"garbage", b"Subject: no sender\r\n\r\nx", b"\r\n\r\n"]),
)


@pytest.fixture(scope="module")
def scratch():
    with tempfile.TemporaryDirectory() as d:
        yield Path(d)


PARTITION_CASES = dict(mails=st.lists(_mail, max_size=12), keep=st.booleans(), top=st.integers(0, 15))


@settings(max_examples=1000, deadline=None)
@given(**PARTITION_CASES)
def test_partition_identity(scratch, mails, keep, top):
    bundle = load_ruleset(
        json.dumps({"rules": [
            {"label": "Work", "keywords": ["resume"], "priority": 1},
            {"label": "Receipt", "keywords": ["bill", "invoice"], "priority": 2},
        ], "default_action": "keep" if keep else "trash"}),
        "offers@spam-blast.test\n",
    )
    cfg = load_config(None, {"report_dir": scratch, "layout_root": scratch / "att", "top": top})
    report = run_pipeline(cfg, clock=_clock, session_factory=lambda c, cr: MemorySession(mails), rules=bundle)
    assert report.fetched == min(top, len(mails))
    assert sum(report.routed_counts.values()) + report.trashed + report.kept == report.fetched
    assert not (scratch / "att").exists()
