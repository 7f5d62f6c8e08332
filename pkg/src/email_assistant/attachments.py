"""File attachments into category folders and draft interview invitations."""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import asdict, dataclass
from datetime import date, datetime, timezone
from email.message import EmailMessage
from email.utils import format_datetime, make_msgid
from pathlib import Path
from string import Formatter

from .errors import ExhaustedSuffixes, IoFailure
from .message_model import ParsedMessage

MAX_NAME_LENGTH = 200
MAX_SUFFIX = 10_000
UNKNOWN = "unknown"

DEFAULT_INVITATION_SUBJECT = "Interview invitation for {candidate_name}"
DEFAULT_INVITATION_BODY = (
    "Dear {candidate_name},\n"
    "\n"
    "Thank you for the application you sent on {application_date}.\n"
    "We would like to invite you for an interview. Please reply with a few\n"
    "times that suit you.\n"
    "\n"
    "Kind regards\n"
)


@dataclass(frozen=True)
class DirectoryLayout:
    root: Path
    category_names: tuple[str, ...] = ("Resumes", "Bills", "Invoices")

    @property
    def useful_dir(self) -> Path:
        return self.root / "Useful"

    @property
    def not_useful_dir(self) -> Path:
        return self.root / "NotUseful"

    @property
    def outbox_dir(self) -> Path:
        return self.root / "Outbox"

    @property
    def category_dirs(self) -> dict[str, Path]:
        return {name: self.useful_dir / name for name in self.category_names}

    def dir_for(self, useful: bool, subfolder: str | None) -> Path:
        if not useful:
            return self.not_useful_dir
        if subfolder is None:
            return self.useful_dir
        return self.useful_dir / sanitize_filename(subfolder)

    def ensure(self) -> None:
        for path in (self.useful_dir, self.not_useful_dir, self.outbox_dir, *self.category_dirs.values()):
            path.mkdir(parents=True, exist_ok=True)


@dataclass(frozen=True)
class RenameTemplate:
    pattern: str = "{candidate_name}_{highest_qualification}_{application_date}"
    separator: str = "_"


@dataclass(frozen=True)
class SavedFileRecord:
    message_unique_id: str
    original_filename: str
    saved_path: str
    sha256: str
    bytes_written: int
    category: str

    def to_dict(self) -> dict:
        return asdict(self)


def sanitize_filename(name: str) -> str:
    cleaned = "".join("_" if ch in "/\\" or ord(ch) < 0x20 else ch for ch in name)
    if cleaned.startswith("."):
        cleaned = "_" + cleaned[1:]
    if not cleaned:
        return "attachment"
    if len(cleaned) > MAX_NAME_LENGTH:
        stem, ext = _split_ext(cleaned)
        if len(ext) >= MAX_NAME_LENGTH // 2:
            stem, ext = cleaned, ""
        cleaned = stem[: MAX_NAME_LENGTH - len(ext)] + ext
    return cleaned


def _split_ext(name: str) -> tuple[str, str]:
    dot = name.rfind(".")
    if dot <= 0:
        return name, ""
    return name[:dot], name[dot:]


class _Placeholders(dict):
    def __missing__(self, key: str) -> str:
        return UNKNOWN


def _fill(template: str, values: dict[str, str]) -> str:
    # unknown placeholders render as "unknown"; stray braces are kept literally
    out = []
    for literal, name, spec, conv in Formatter().parse(template):
        out.append(literal)
        if name is not None:
            out.append(_Placeholders(values)[name] if name else "{}")
    return "".join(out)


def render_rename(
    tmpl: RenameTemplate,
    candidate_name: str,
    qualification: str | None,
    application_date: date,
    extension: str,
) -> str:
    values = {
        "candidate_name": candidate_name.strip() or UNKNOWN,
        "highest_qualification": (qualification or "").strip() or UNKNOWN,
        "application_date": application_date.isoformat(),
    }
    rendered = tmpl.separator.join(_fill(tmpl.pattern, values).split())
    if extension and not extension.startswith("."):
        extension = "." + extension
    return sanitize_filename(rendered + extension)


def candidate_name(msg: ParsedMessage) -> str:
    """The applicant's display name, or the local part of their address."""
    if msg.sender_name.strip():
        return msg.sender_name.strip()
    return msg.sender.split("@", 1)[0]


def resolve_collision(directory: Path, filename: str, reserved: set[str] | frozenset[str] = frozenset()) -> str:
    """Return ``filename`` or the first free ``<stem> (k)<ext>`` in ``directory``.

    Names in ``reserved`` count as taken, so a batch can plan several files for
    the same directory without writing any of them.
    """

    def taken(name: str) -> bool:
        return name in reserved or (directory / name).exists()

    if not taken(filename):
        return filename
    stem, ext = _split_ext(filename)
    for k in range(1, MAX_SUFFIX + 1):
        candidate = f"{stem} ({k}){ext}"
        if not taken(candidate):
            return candidate
    raise ExhaustedSuffixes(f"more than {MAX_SUFFIX} files named like {filename!r} in {directory}")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write_bytes(target: Path, data: bytes) -> None:
    """Write ``data`` to ``target`` via a temp file; never replaces an existing file."""
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-", suffix=".part")
    except OSError as exc:
        raise IoFailure(f"cannot create {target.parent}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        try:
            os.link(tmp, target)
        except FileExistsError:
            raise IoFailure(f"{target} already exists")
        except OSError:
            # filesystems without hard links
            if target.exists():
                raise IoFailure(f"{target} already exists")
            os.rename(tmp, target)
    except OSError as exc:
        raise IoFailure(f"writing {target} failed: {exc}") from exc
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_attachment(
    att,
    directory: Path,
    final_name: str,
    *,
    message_unique_id: str = "",
    category: str = "",
) -> SavedFileRecord:
    target = Path(directory) / final_name
    atomic_write_bytes(target, att.decoded_bytes)
    return SavedFileRecord(
        message_unique_id=message_unique_id,
        original_filename=att.filename,
        saved_path=str(target),
        sha256=sha256_hex(att.decoded_bytes),
        bytes_written=len(att.decoded_bytes),
        category=category,
    )


def build_invitation(
    msg: ParsedMessage,
    subject_template: str = DEFAULT_INVITATION_SUBJECT,
    body_template: str = DEFAULT_INVITATION_BODY,
    from_address: str | None = None,
    now: datetime | None = None,
) -> EmailMessage:
    values = {
        "candidate_name": candidate_name(msg),
        "application_date": msg.date.date().isoformat(),
    }
    sender = from_address or (msg.recipients[0] if msg.recipients else "assistant@localhost")
    draft = EmailMessage()
    draft["From"] = sender
    draft["To"] = msg.sender
    draft["Subject"] = _fill(subject_template, values)
    draft["Date"] = format_datetime(now or datetime.now(timezone.utc))
    draft["Message-ID"] = make_msgid(domain="email-assistant.local")
    if msg.message_id:
        draft["In-Reply-To"] = f"<{msg.message_id}>"
        draft["References"] = f"<{msg.message_id}>"
    draft.set_content(_fill(body_template, values))
    return draft


def invitation_filename(msg: ParsedMessage) -> str:
    return sanitize_filename(f"{msg.unique_id}-invitation.eml")


def draft_interview_invitation(
    msg: ParsedMessage,
    outbox: Path,
    subject_template: str = DEFAULT_INVITATION_SUBJECT,
    body_template: str = DEFAULT_INVITATION_BODY,
    from_address: str | None = None,
) -> Path:
    """Write an invitation addressed to the applicant into ``outbox``; nothing is sent."""
    outbox = Path(outbox)
    draft = build_invitation(msg, subject_template, body_template, from_address)
    try:
        outbox.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create outbox {outbox}: {exc}") from exc
    target = outbox / resolve_collision(outbox, invitation_filename(msg))
    atomic_write_bytes(target, draft.as_bytes())
    return target
