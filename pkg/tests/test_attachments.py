from __future__ import annotations

import hashlib
import os
from datetime import date, datetime, timezone
from pathlib import Path

import pytest

from email_assistant.attachments import (
    DirectoryLayout,
    RenameTemplate,
    atomic_write_bytes,
    candidate_name,
    draft_interview_invitation,
    render_rename,
    resolve_collision,
    sanitize_filename,
    write_attachment,
)
from email_assistant.errors import ExhaustedSuffixes, IoFailure
from email_assistant.message_model import Attachment, ParsedMessage, RawMessage, parse_message

D = date(2022, 1, 15)


def applicant(sender: str = "a@x", name: str = "", uid: str = "B-000001") -> ParsedMessage:
    return ParsedMessage(
        unique_id=uid, sender=sender, recipients=("hr@office.test",), subject="Resume",
        date=datetime(2022, 1, 15, 9, tzinfo=timezone.utc), body_text="", sender_name=name,
        message_id=f"{uid}@x",
    )


@pytest.mark.parametrize("name, expected", [
    ("a/b.pdf", "a_b.pdf"),
    ("..secret", "_.secret"),
    ("", "attachment"),
    ("a\\b\x00c\x1f.txt", "a_b_c_.txt"),
    ("plain.pdf", "plain.pdf"),
])
def test_sanitize_examples(name, expected):
    assert sanitize_filename(name) == expected


def test_sanitize_caps_length_and_keeps_extension():
    out = sanitize_filename("x" * 500 + ".pdf")
    assert len(out) == 200
    assert out.endswith(".pdf")


@pytest.mark.parametrize("cand, qual, ext, expected", [
    ("John Doe", "MSc", ".pdf", "John_Doe_MSc_2022-01-15.pdf"),
    ("Jane Roe", None, ".pdf", "Jane_Roe_unknown_2022-01-15.pdf"),
    ("a/b", "X", ".txt", "a_b_X_2022-01-15.txt"),
    ("", "", "docx", "unknown_unknown_2022-01-15.docx"),
])
def test_render_rename_examples(cand, qual, ext, expected):
    assert render_rename(RenameTemplate(), cand, qual, D, ext) == expected


def test_render_rename_unknown_placeholder_and_separator():
    tmpl = RenameTemplate(pattern="{candidate_name} {nickname} {application_date}", separator="-")
    assert render_rename(tmpl, "Ann Lee", None, D, ".pdf") == "Ann-Lee-unknown-2022-01-15.pdf"


def test_candidate_name_fallback():
    assert candidate_name(applicant(name="John Doe")) == "John Doe"
    assert candidate_name(applicant(sender="ali.khan@x")) == "ali.khan"


def test_resolve_collision_sequence(tmp_path):
    assert resolve_collision(tmp_path, "x.pdf") == "x.pdf"
    (tmp_path / "x.pdf").write_bytes(b"")
    assert resolve_collision(tmp_path, "x.pdf") == "x (1).pdf"
    (tmp_path / "x (1).pdf").write_bytes(b"")
    assert resolve_collision(tmp_path, "x.pdf") == "x (2).pdf"
    assert resolve_collision(tmp_path, "x.pdf", {"x (2).pdf"}) == "x (3).pdf"


def test_resolve_collision_exhausts(tmp_path, monkeypatch):
    import email_assistant.attachments as mod
    monkeypatch.setattr(mod, "MAX_SUFFIX", 3)
    reserved = {"x.pdf"} | {f"x ({k}).pdf" for k in range(1, 4)}
    with pytest.raises(ExhaustedSuffixes):
        resolve_collision(tmp_path, "x.pdf", reserved)


def test_write_attachment_hash_matches_oracle(tmp_path):
    rec = write_attachment(Attachment("h.txt", "text/plain", "base64", b"hello"), tmp_path, "h.txt",
                           message_unique_id="B-1", category="Bills")
    on_disk = (tmp_path / "h.txt").read_bytes()
    assert on_disk == b"hello"
    assert rec.sha256 == hashlib.sha256(b"hello").hexdigest() == hashlib.sha256(on_disk).hexdigest()
    assert rec.bytes_written == 5
    assert rec.category == "Bills"
    assert rec.message_unique_id == "B-1"


def test_zero_byte_attachment(tmp_path):
    rec = write_attachment(Attachment("e.bin", "application/octet-stream", "base64", b""), tmp_path, "e.bin")
    assert (tmp_path / "e.bin").stat().st_size == 0
    assert rec.bytes_written == 0


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_directory(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    try:
        with pytest.raises(IoFailure):
            write_attachment(Attachment("a", "x/y", "7bit", b"data"), locked, "a")
        assert list(locked.iterdir()) == []
    finally:
        locked.chmod(0o700)


def test_write_into_a_file_path_fails_cleanly(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_bytes(b"not a directory")
    with pytest.raises(IoFailure):
        write_attachment(Attachment("a", "x/y", "7bit", b"data"), blocker / "sub", "a")
    assert blocker.read_bytes() == b"not a directory"


def test_atomic_write_never_overwrites(tmp_path):
    target = tmp_path / "f.bin"
    target.write_bytes(b"original")
    with pytest.raises(IoFailure):
        atomic_write_bytes(target, b"replacement")
    assert target.read_bytes() == b"original"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["f.bin"]


def test_layout_paths_and_idempotent_creation(tmp_path):
    layout = DirectoryLayout(tmp_path / "att", ("Resumes", "Bills", "Invoices"))
    layout.ensure()
    first = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*"))
    layout.ensure()
    assert sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*")) == first
    assert layout.dir_for(True, "Bills") == tmp_path / "att" / "Useful" / "Bills"
    assert layout.dir_for(True, None) == tmp_path / "att" / "Useful"
    assert layout.dir_for(False, None) == tmp_path / "att" / "NotUseful"
    assert layout.outbox_dir == tmp_path / "att" / "Outbox"
    assert all(str(p).startswith(str(tmp_path / "att")) for p in layout.category_dirs.values())


def test_invitation_drafts(tmp_path):
    outbox = tmp_path / "Outbox"
    first = draft_interview_invitation(applicant("a@x", "Ann Lee", "B-000001"), outbox,
                                       "Interview: {candidate_name}", "Hi {candidate_name}, applied {application_date}.")
    second = draft_interview_invitation(applicant("b@y", "", "B-000002"), outbox)
    assert first.name == "B-000001-invitation.eml"
    assert first != second and second.is_file()
    parsed = parse_message(RawMessage(first.read_bytes()), 0, "R")
    assert parsed.recipients == ("a@x",)
    assert parsed.subject == "Interview: Ann Lee"
    assert "applied 2022-01-15" in parsed.body_text
    assert parse_message(RawMessage(second.read_bytes()), 1, "R").recipients == ("b@y",)


def test_invitation_draft_collision(tmp_path):
    msg = applicant()
    a = draft_interview_invitation(msg, tmp_path)
    b = draft_interview_invitation(msg, tmp_path)
    assert a.name != b.name and a.read_bytes() != b""
