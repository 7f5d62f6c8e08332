"""IMAP4rev1 client subset on top of :mod:`imaplib`.

Every command/response line is captured in :attr:`ImapSession.trace` with
LOGIN arguments redacted, so traces can be written next to the audit log.
"""

from __future__ import annotations

import imaplib
import re
import socket
import ssl
from datetime import datetime, timezone

from ..errors import (
    ActionFailure,
    AuthFailure,
    ConnectFailure,
    ConnectTimeout,
    FetchFailure,
    NoSuchFolder,
    StoreError,
    TlsFailure,
)
from ..message_model import RawMessage
from .base import Credentials, FolderSummary, MessageHandle, StoreAction, StoreConfig

_INTERNALDATE = re.compile(rb'INTERNALDATE "([^"]+)"')
_UID = re.compile(rb"UID (\d+)")
_EXISTS = re.compile(rb"^(\d+)$")


def quote_mailbox(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _redact(line: bytes) -> bytes:
    parts = line.split(b" ", 3)
    if len(parts) >= 3 and parts[1].upper() == b"LOGIN":
        return b" ".join(parts[:3]) + b" ***"
    return line


class _TraceMixin:
    trace: list[str]

    def send(self, data: bytes) -> None:
        for line in data.rstrip(b"\r\n").split(b"\r\n"):
            if line:
                self.trace.append("C: " + _redact(line).decode("ascii", "replace"))
        super().send(data)

    def readline(self) -> bytes:
        line = super().readline()
        self.trace.append("S: " + line.rstrip(b"\r\n").decode("ascii", "replace"))
        return line

    def read(self, size: int) -> bytes:
        data = super().read(size)
        self.trace.append(f"S: <{len(data)} literal bytes>")
        return data


class _TracingIMAP4(_TraceMixin, imaplib.IMAP4):
    def __init__(self, host: str, port: int, timeout: float) -> None:
        self.trace = []
        super().__init__(host, port, timeout=timeout)


class _TracingIMAP4_SSL(_TraceMixin, imaplib.IMAP4_SSL):
    def __init__(self, host: str, port: int, timeout: float, ssl_context: ssl.SSLContext) -> None:
        self.trace = []
        super().__init__(host, port, ssl_context=ssl_context, timeout=timeout)


def _parse_internaldate(raw: bytes) -> datetime:
    return datetime.strptime(raw.decode().strip(), "%d-%b-%Y %H:%M:%S %z").astimezone(timezone.utc)


class ImapSession:
    def __init__(self, conn: imaplib.IMAP4, cfg: StoreConfig) -> None:
        self.conn = conn
        self.cfg = cfg
        self.folder: str | None = None

    @property
    def trace(self) -> list[str]:
        return self.conn.trace

    @classmethod
    def connect(cls, cfg: StoreConfig, creds: Credentials) -> "ImapSession":
        timeout = cfg.timeout_seconds
        try:
            if cfg.mode == "imap_tls":
                ctx = ssl.create_default_context()
                conn = _TracingIMAP4_SSL(cfg.server, cfg.port, timeout, ctx)
            else:
                conn = _TracingIMAP4(cfg.server, cfg.port, timeout)
        except ssl.SSLError as exc:
            raise TlsFailure(f"TLS handshake with {cfg.server}:{cfg.port} failed: {exc}") from exc
        except (socket.timeout, TimeoutError) as exc:
            raise ConnectTimeout(
                f"no response from {cfg.server}:{cfg.port} within {cfg.timeout_ms} ms"
            ) from exc
        except (OSError, imaplib.IMAP4.error) as exc:
            raise ConnectFailure(f"cannot connect to {cfg.server}:{cfg.port}: {exc}") from exc

        session = cls(conn, cfg)
        try:
            conn.login(creds.email, creds.password)
        except imaplib.IMAP4.abort as exc:
            raise ConnectFailure(f"connection lost during LOGIN: {exc}") from exc
        except imaplib.IMAP4.error as exc:
            session._shutdown()
            raise AuthFailure(f"LOGIN rejected for {creds.email}") from exc
        except (socket.timeout, TimeoutError) as exc:
            raise ConnectTimeout(f"LOGIN timed out after {cfg.timeout_ms} ms") from exc
        except OSError as exc:
            raise ConnectFailure(f"connection lost during LOGIN: {exc}") from exc
        return session

    def _shutdown(self) -> None:
        try:
            self.conn.shutdown()
        except OSError:
            pass

    def _uid(self, command: str, *args: str) -> tuple[str, list]:
        try:
            return self.conn.uid(command, *args)
        except (imaplib.IMAP4.error, OSError) as exc:
            raise StoreError(f"UID {command} failed: {exc}") from exc

    def select_folder(self, folder: str) -> FolderSummary:
        try:
            typ, data = self.conn.select(quote_mailbox(folder))
        except (imaplib.IMAP4.error, OSError) as exc:
            raise NoSuchFolder(f"{folder}: {exc}") from exc
        if typ != "OK":
            raise NoSuchFolder(folder)
        self.folder = folder
        match = _EXISTS.match(data[0] or b"0")
        total = int(match.group(1)) if match else 0
        return FolderSummary(total, len(self._search_unseen()))

    def _search_unseen(self) -> list[str]:
        try:
            typ, data = self._uid("SEARCH", "UNSEEN")
        except StoreError as exc:
            raise FetchFailure(str(exc)) from exc
        if typ != "OK":
            raise FetchFailure("UID SEARCH UNSEEN rejected")
        return [uid.decode() for uid in (data[0] or b"").split()]

    def fetch_unseen_top(self, top: int) -> list[tuple[MessageHandle, RawMessage]]:
        if self.folder is None:
            raise FetchFailure("no folder selected")
        if top <= 0:
            return []
        uids = self._search_unseen()
        if not uids:
            return []
        try:
            typ, data = self._uid("FETCH", ",".join(uids), "(UID INTERNALDATE)")
        except StoreError as exc:
            raise FetchFailure(str(exc)) from exc
        if typ != "OK":
            raise FetchFailure("UID FETCH INTERNALDATE rejected")
        dated = []
        for item in data:
            line = item[0] if isinstance(item, tuple) else item
            if not line:
                continue
            uid, stamp = _UID.search(line), _INTERNALDATE.search(line)
            if uid and stamp:
                dated.append((_parse_internaldate(stamp.group(1)), int(uid.group(1))))
        dated.sort(key=lambda e: (-e[0].timestamp(), e[1]))

        out = []
        for stamp, uid in dated[:top]:
            out.append(self._fetch_body(str(uid), stamp))
        return out

    def _fetch_body(self, uid: str, stamp: datetime) -> tuple[MessageHandle, RawMessage]:
        try:
            typ, data = self._uid("FETCH", uid, "(UID BODY.PEEK[])")
        except StoreError as exc:
            raise FetchFailure(str(exc)) from exc
        body = next((item[1] for item in data if isinstance(item, tuple)), None)
        if typ != "OK" or not body:
            raise FetchFailure(f"UID FETCH {uid} returned no message body")
        handle = MessageHandle(store_uid=uid, folder=self.folder, seen=False)
        return handle, RawMessage(body, handle, stamp)

    def _ensure_ok(self, typ: str, data: list, what: str) -> None:
        if typ != "OK":
            detail = b" ".join(d for d in data if isinstance(d, bytes)).decode("ascii", "replace")
            raise ActionFailure(f"{what} rejected: {detail}")

    def _with_trycreate(self, command: str, uid: str, target: str) -> None:
        typ, data = self._uid(command, uid, quote_mailbox(target))
        if typ != "OK" and any(b"TRYCREATE" in d for d in data if isinstance(d, bytes)):
            self.conn.create(quote_mailbox(target))
            typ, data = self._uid(command, uid, quote_mailbox(target))
        self._ensure_ok(typ, data, f"UID {command} to {target}")

    def _move(self, uid: str, target: str) -> None:
        if "MOVE" in self.conn.capabilities:
            self._with_trycreate("MOVE", uid, target)
            return
        # no MOVE extension: the only place EXPUNGE and \Deleted are ever used
        self._with_trycreate("COPY", uid, target)
        typ, data = self._uid("STORE", uid, "+FLAGS.SILENT", "(\\Deleted)")
        self._ensure_ok(typ, data, "UID STORE \\Deleted")
        typ, data = self.conn.expunge()
        self._ensure_ok(typ, data, "EXPUNGE")

    def apply_action(self, action: StoreAction) -> str:
        uid = action.handle.store_uid
        try:
            typ, data = self._uid("STORE", uid, "+FLAGS.SILENT", "(\\Seen)")
            self._ensure_ok(typ, data, "UID STORE \\Seen")
            if action.kind == "mark_seen":
                return "OK seen"
            target = action.target if action.kind == "move_to_label" else self.cfg.trash_folder
            try:
                self._move(uid, target)
            except (ActionFailure, StoreError):
                # leave the message unseen so the next run retries it
                self._uid("STORE", uid, "-FLAGS.SILENT", "(\\Seen)")
                raise
            return f"OK moved to {target}"
        except ActionFailure:
            raise
        except (StoreError, imaplib.IMAP4.error, OSError) as exc:
            raise ActionFailure(str(exc)) from exc

    def close(self) -> None:
        try:
            self.conn.logout()
        except (imaplib.IMAP4.error, OSError):
            self._shutdown()
