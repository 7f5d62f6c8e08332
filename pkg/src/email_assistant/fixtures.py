"""Deterministic fixture mailboxes for demos and tests.

``write_workflow_fixture`` lays down the nine-message triage scenario
(three resumes, two bills, one invoice, three junk mails of which one comes
from a blocklisted sender) together with its rules, blocklist and expected
labels. ``write_payload_fixture`` builds messages around known random
payloads so saved files can be checked against hashes taken at generation
time.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

CRLF = b"\r\n"

WORKFLOW_RULES = {
    "rules": [
        {"label": "Work", "keywords": ["resume"], "match_fields": ["subject"], "priority": 1},
        {"label": "Receipt", "keywords": ["bill", "invoice"], "match_fields": ["subject"], "priority": 2},
    ],
    "default_action": "trash",
    "trash_folder": "Trash",
    "attachment": {
        "useful_keywords": ["resume", "cv", "bill", "invoice"],
        "subfolders": [
            {"keywords": ["resume", "cv"], "folder": "Resumes"},
            {"keywords": ["bill"], "folder": "Bills"},
            {"keywords": ["invoice"], "folder": "Invoices"},
        ],
        "eligibility_keywords": ["experience"],
        "resume_folder": "Resumes",
    },
}

WORKFLOW_BLOCKLIST = """\
# senders whose mail is never useful
offers@spam-blast.test
"""

PAYLOAD_SIZES = (
    0, 1, 2, 3, 4, 5, 57, 76, 77, 255,
    256, 1000, 4096, 10_000, 65_535, 65_536, 100_000, 500_000, 1_000_000, 1_048_576,
)


@dataclass(frozen=True)
class FixtureMail:
    name: str
    sender: str
    subject: str
    date: str
    body: str
    filename: str
    media_type: str
    encoding: str
    payload: bytes
    expected: str


def _fake_pdf(title: str) -> bytes:
    return (
        b"%PDF-1.4\n1 0 obj << /Title (" + title.encode() + b") >> endobj\n"
        + bytes(range(256)) + b"\n%%EOF\n"
    )


WORKFLOW_MAILS = (
    FixtureMail("01-resume-john.eml", '"John Doe" <john.doe@applicants.test>',
                "My Resume for the role of Data Analyst", "Mon, 10 Jan 2022 09:15:00 +0000",
                "Please find my CV attached.", "john_doe_cv.pdf", "application/pdf", "base64",
                _fake_pdf("John Doe CV"), "Work"),
    FixtureMail("02-resume-jane.eml", '"Jane Roe" <jane.roe@applicants.test>',
                "Resume - Software Engineer application", "Tue, 11 Jan 2022 10:30:00 +0000",
                "Hello, my resume is attached as a text file.", "jane_resume.txt", "text/plain",
                "quoted-printable",
                "Jane Roe\nMSc Computer Science\nExperience: 5 years of backend development = fun\n".encode(),
                "Work"),
    FixtureMail("03-resume-ali.eml", "ali.khan@applicants.test",
                "Application with resume attached", "Wed, 12 Jan 2022 11:45:00 +0000",
                "Dear hiring team, please consider my application.", "ali_khan.docx",
                "application/vnd.openxmlformats-officedocument.wordprocessingml.document", "base64",
                b"PK\x03\x04" + bytes(range(200, 256)) * 3, "Work"),
    FixtureMail("04-bill-electricity.eml", '"City Power" <billing@citypower.test>',
                "Electricity Bill March 2022", "Thu, 13 Jan 2022 08:00:00 +0000",
                "Your statement is attached.", "march_statement.pdf", "application/pdf", "base64",
                _fake_pdf("Electricity statement"), "Receipt"),
    FixtureMail("05-bill-phone.eml", '"PhoneCo" <accounts@phoneco.test>',
                "Your phone bill is ready", "Fri, 14 Jan 2022 12:00:00 +0000",
                "<p>Your <b>bill</b> is attached.</p>", "statement.txt", "text/plain", "7bit",
                b"Amount due on this bill: 120", "Receipt"),
    FixtureMail("06-invoice-supplies.eml", '"Office Supplies Ltd" <sales@supplies.test>',
                "Invoice INV-2022-017", "Sat, 15 Jan 2022 15:20:00 +0000",
                "Thank you for your order.", "INV-2022-017.pdf", "application/pdf", "base64",
                _fake_pdf("INV-2022-017"), "Receipt"),
    FixtureMail("07-junk-cruise.eml", '"Lucky Draw" <winner@prizes.test>',
                "WIN A FREE CRUISE", "Sun, 16 Jan 2022 07:07:07 +0000",
                "Click now to claim your prize!", "cruise.jpg", "image/jpeg", "base64",
                b"\xff\xd8\xff\xe0" + bytes(range(64)) + b"\xff\xd9", "trash"),
    FixtureMail("08-junk-newsletter.eml", '"Deals Weekly" <news@deals.test>',
                "Limited offer just for you", "Mon, 17 Jan 2022 18:30:00 +0000",
                "This week's deals.", "deals.html", "text/html", "quoted-printable",
                b"<html><body><h1>50% off</h1></body></html>\n", "trash"),
    FixtureMail("09-blocked-sender.eml", '"Totally Legit" <offers@spam-blast.test>',
                "Resume attached", "Tue, 18 Jan 2022 20:00:00 +0000",
                "Open the attachment.", "cv.pdf", "application/pdf", "base64",
                _fake_pdf("not a cv"), "trash"),
)


def qp_encode_binary(data: bytes) -> bytes:
    """Quoted-printable encoding that is safe for arbitrary bytes.

    CR, LF, space and tab are always escaped, so the encoded text contains
    only soft line breaks.
    """
    out = bytearray()
    line_len = 0
    for byte in data:
        token = bytes([byte]) if 33 <= byte <= 126 and byte != 61 else b"=%02X" % byte
        if line_len + len(token) > 75:
            out += b"=" + CRLF
            line_len = 0
        out += token
        line_len += len(token)
    return bytes(out)


def _b64_lines(data: bytes) -> bytes:
    encoded = base64.b64encode(data)
    return CRLF.join(encoded[i:i + 76] for i in range(0, len(encoded), 76))


def encode_payload(data: bytes, encoding: str) -> bytes:
    if encoding == "base64":
        return _b64_lines(data)
    if encoding == "quoted-printable":
        return qp_encode_binary(data)
    return data.replace(b"\r\n", b"\n").replace(b"\n", CRLF).rstrip(CRLF)


def render_mail(
    sender: str,
    subject: str,
    date: str,
    body: str,
    attachments: list[tuple[str, str, str, bytes]],
    message_id: str,
    to: str = "assistant@office.test",
    boundary: str = "=_fixture_boundary",
) -> bytes:
    """Serialize a message with CRLF line endings and a fixed boundary."""
    body_type = "text/html" if body.lstrip().startswith("<") else "text/plain"
    headers = [
        f"From: {sender}",
        f"To: {to}",
        f"Subject: {subject}",
        f"Date: {date}",
        f"Message-ID: <{message_id}>",
        "MIME-Version: 1.0",
    ]
    if not attachments:
        headers += [f"Content-Type: {body_type}; charset=utf-8", "Content-Transfer-Encoding: 8bit"]
        return CRLF.join(h.encode() for h in headers) + CRLF + CRLF + body.encode() + CRLF
    headers.append(f'Content-Type: multipart/mixed; boundary="{boundary}"')
    parts = [
        CRLF.join([
            f"--{boundary}".encode(),
            f"Content-Type: {body_type}; charset=utf-8".encode(),
            b"Content-Transfer-Encoding: 8bit",
            b"",
            body.encode(),
        ])
    ]
    for filename, media_type, encoding, payload in attachments:
        charset = "; charset=utf-8" if media_type.startswith("text/") else ""
        parts.append(CRLF.join([
            f"--{boundary}".encode(),
            f'Content-Type: {media_type}{charset}; name="{filename}"'.encode(),
            f'Content-Disposition: attachment; filename="{filename}"'.encode(),
            f"Content-Transfer-Encoding: {encoding}".encode(),
            b"",
            encode_payload(payload, encoding),
        ]))
    return (
        CRLF.join(h.encode() for h in headers) + CRLF + CRLF
        + CRLF.join(parts) + CRLF + f"--{boundary}--".encode() + CRLF
    )


def _mailbox(root: Path, folder: str = "Inbox") -> Path:
    inbox = root / folder
    (inbox / "new").mkdir(parents=True, exist_ok=True)
    (inbox / "cur").mkdir(parents=True, exist_ok=True)
    return inbox / "new"


def workflow_messages() -> dict[str, bytes]:
    return {
        m.name: render_mail(
            m.sender, m.subject, m.date, m.body,
            [(m.filename, m.media_type, m.encoding, m.payload)],
            message_id=f"{m.name.removesuffix('.eml')}@fixture.test",
        )
        for m in WORKFLOW_MAILS
    }


def write_workflow_fixture(target: Path) -> dict[str, Path]:
    """Create ``target/mailbox`` plus rules, blocklist and manifest files."""
    target = Path(target)
    new = _mailbox(target / "mailbox")
    for name, data in workflow_messages().items():
        (new / name).write_bytes(data)
    paths = {
        "mailbox": target / "mailbox",
        "rules": target / "rules.json",
        "blocklist": target / "blocklist.txt",
        "manifest": target / "manifest.json",
    }
    paths["rules"].write_text(json.dumps(WORKFLOW_RULES, indent=2) + "\n", encoding="utf-8")
    paths["blocklist"].write_text(WORKFLOW_BLOCKLIST, encoding="utf-8")
    manifest = {m.name: m.expected for m in WORKFLOW_MAILS}
    paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return paths


def payloads(seed: int = 20220101, sizes: tuple[int, ...] = PAYLOAD_SIZES) -> list[bytes]:
    rng = random.Random(seed)
    return [rng.randbytes(n) for n in sizes]


def write_payload_fixture(target: Path, seed: int = 20220101) -> dict[str, str]:
    """Write one message per payload into ``target/Inbox/new``.

    Returns ``{attachment filename: sha256 of the payload}``; hashes are taken
    here, before any encoding.
    """
    new = _mailbox(Path(target))
    expected: dict[str, str] = {}
    for i, data in enumerate(payloads(seed)):
        encoding = "base64" if i % 2 == 0 else "quoted-printable"
        filename = f"payload-{i:02d}.bin"
        expected[filename] = hashlib.sha256(data).hexdigest()
        raw = render_mail(
            '"Payload Sender" <payloads@fixture.test>',
            f"Invoice payload {i:02d}",
            f"Mon, 03 Jan 2022 00:{i:02d}:00 +0000",
            f"payload {i} of {len(PAYLOAD_SIZES)}",
            [(filename, "application/octet-stream", encoding, data)],
            message_id=f"payload-{i:02d}@fixture.test",
        )
        (new / f"payload-{i:02d}.eml").write_bytes(raw)
    return expected


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Write the nine-message workflow fixture to a directory.")
    parser.add_argument("target", type=Path)
    args = parser.parse_args(argv)
    paths = write_workflow_fixture(args.target)
    for key, path in paths.items():
        print(f"{key:10s} {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
