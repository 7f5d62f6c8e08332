from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from datetime import datetime, timezone
from email.parser import BytesHeaderParser
from email.utils import parsedate_to_datetime
from pathlib import Path
from typing import NamedTuple, Protocol

from ..errors import ConfigSemantic
from ..message_model import RawMessage

STORE_MODES = ("imap_tls", "fixture", "loopback_plain")
ACTION_KINDS = ("move_to_label", "move_to_trash", "mark_seen")

DEFAULT_SERVER = "imap.gmail.com"
DEFAULT_PORT = 993
DEFAULT_FOLDER = "Inbox"
DEFAULT_TIMEOUT_MS = 30_000
DEFAULT_TOP = 9
DEFAULT_TRASH = "Trash"


@dataclass(frozen=True)
class StoreConfig:
    """Connection parameters for one mailbox.

    ``timeout_ms`` bounds every network operation; ``top`` caps how many
    unseen messages one run takes into work.
    """

    server: str = DEFAULT_SERVER
    port: int = DEFAULT_PORT
    mail_folder: str = DEFAULT_FOLDER
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    top: int = DEFAULT_TOP
    mode: str = "imap_tls"
    trash_folder: str = DEFAULT_TRASH
    fixture_root: Path | None = None

    def __post_init__(self) -> None:
        if self.mode not in STORE_MODES:
            raise ConfigSemantic(f"unknown store mode {self.mode!r}")
        if isinstance(self.port, bool) or not isinstance(self.port, int) or not 1 <= self.port <= 65535:
            raise ConfigSemantic(f"port must be in 1..65535, got {self.port!r}")
        if isinstance(self.timeout_ms, bool) or not isinstance(self.timeout_ms, int) or self.timeout_ms <= 0:
            raise ConfigSemantic(f"timeout_ms must be a positive integer, got {self.timeout_ms!r}")
        if isinstance(self.top, bool) or not isinstance(self.top, int) or self.top < 0:
            raise ConfigSemantic(f"top must be a non-negative integer, got {self.top!r}")
        if not self.mail_folder:
            raise ConfigSemantic("mail_folder must be non-empty")
        if not self.trash_folder:
            raise ConfigSemantic("trash_folder must be non-empty")
        if not self.server:
            raise ConfigSemantic("server must be non-empty")
        if self.mode == "fixture" and self.fixture_root is None:
            raise ConfigSemantic("fixture mode requires fixture_root")
        if self.mode == "loopback_plain" and not is_loopback(self.server):
            raise ConfigSemantic("plaintext IMAP is only permitted on loopback addresses")

    @property
    def timeout_seconds(self) -> float:
        return self.timeout_ms / 1000.0


def is_loopback(host: str) -> bool:
    if host == "localhost":
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


@dataclass(frozen=True)
class Credentials:
    email: str
    password: str = field(repr=False)

    def __repr__(self) -> str:
        return f"Credentials(email={self.email!r}, password=<redacted>)"


@dataclass(frozen=True)
class MessageHandle:
    store_uid: str
    folder: str
    seen: bool = False


@dataclass(frozen=True)
class StoreAction:
    kind: str
    handle: MessageHandle
    target: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == "move_to_label" and not self.target:
            raise ValueError("move_to_label requires a target folder")


class FolderSummary(NamedTuple):
    total: int
    unseen: int


class StoreSession(Protocol):
    def select_folder(self, folder: str) -> FolderSummary: ...

    def fetch_unseen_top(self, top: int) -> list[tuple[MessageHandle, RawMessage]]: ...

    def apply_action(self, action: StoreAction) -> str: ...

    def close(self) -> None: ...


def header_date(data: bytes) -> datetime | None:
    """Parse the Date header of a raw message, as an aware UTC datetime."""
    try:
        headers = BytesHeaderParser().parsebytes(data)
        raw = headers.get("Date")
        if not raw:
            return None
        value = parsedate_to_datetime(str(raw))
    except (TypeError, ValueError, IndexError):
        return None
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def free_message_name(folder_dir: Path, name: str) -> str:
    """Pick a file name not present in either ``new/`` or ``cur/`` of a folder."""

    def taken(candidate: str) -> bool:
        return (folder_dir / "new" / candidate).exists() or (folder_dir / "cur" / candidate).exists()

    if not taken(name):
        return name
    stem, dot, ext = name.rpartition(".")
    if not dot:
        stem, ext = name, ""
    else:
        ext = "." + ext
    k = 1
    while taken(f"{stem} ({k}){ext}"):
        k += 1
    return f"{stem} ({k}){ext}"


def folder_path(root: Path, folder: str) -> Path:
    """Map an IMAP-style folder name onto a fixture directory.

    ``INBOX`` matches case-insensitively, as IMAP requires; any other name is
    taken literally. Names escaping the root are rejected.
    """
    parts = [p for p in folder.split("/") if p]
    if not parts or any(p in (".", "..") for p in parts):
        raise ValueError(f"invalid folder name {folder!r}")
    if len(parts) == 1 and parts[0].upper() == "INBOX" and root.is_dir():
        for child in root.iterdir():
            if child.is_dir() and child.name.upper() == "INBOX":
                return child
    return root.joinpath(*parts)


def list_folders(root: Path) -> list[str]:
    found = []
    for sub in sorted(root.rglob("*")):
        if sub.is_dir() and ((sub / "new").is_dir() or (sub / "cur").is_dir()):
            found.append(sub.relative_to(root).as_posix())
    return found


def message_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.is_file() and not p.name.startswith("."))
