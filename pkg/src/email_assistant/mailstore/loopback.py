"""Plaintext IMAP4rev1 test server backed by a fixture directory tree.

Serves the command subset the client needs (CAPABILITY, LOGIN, LIST, CREATE,
SELECT, SEARCH, FETCH, STORE, COPY, MOVE, EXPUNGE, NOOP, CLOSE, LOGOUT, with
UID variants) on a loopback address only. Every state change is applied to
the directory tree immediately: ``\\Seen`` decides ``new/`` versus ``cur/``,
moves and copies are file operations, ``\\Deleted`` is held in memory until
EXPUNGE removes the file.
"""

from __future__ import annotations

import argparse
import errno
import logging
import os
import re
import shutil
import socketserver
import threading
from datetime import datetime, timezone
from pathlib import Path

from ..errors import PortInUse
from .base import folder_path, free_message_name, header_date, is_loopback, list_folders, message_files

log = logging.getLogger(__name__)

_TOKEN = re.compile(rb'\s*(?:"((?:[^"\\]|\\.)*)"|(\()|(\))|\{(\d+)\}$|([^\s()"]+))')
_ATOM_UNQUOTE = re.compile(rb"\\(.)")
UIDVALIDITY = 1


class ProtocolError(Exception):
    pass


def tokenize(line: bytes) -> list:
    """Split an IMAP argument string into atoms, strings and nested lists."""
    stack: list[list] = [[]]
    pos = 0
    while pos < len(line):
        match = _TOKEN.match(line, pos)
        if not match or match.end() == pos:
            if line[pos:].strip():
                raise ProtocolError(f"cannot parse arguments near {line[pos:pos + 20]!r}")
            break
        pos = match.end()
        quoted, opened, closed, _literal, atom = match.groups()
        if quoted is not None:
            stack[-1].append(_ATOM_UNQUOTE.sub(rb"\1", quoted).decode("utf-8", "replace"))
        elif opened:
            stack.append([])
        elif closed:
            if len(stack) == 1:
                raise ProtocolError("unbalanced parenthesis")
            inner = stack.pop()
            stack[-1].append(inner)
        elif atom is not None:
            stack[-1].append(atom.decode("utf-8", "replace"))
    if len(stack) != 1:
        raise ProtocolError("unbalanced parenthesis")
    return stack[0]


def parse_sequence_set(spec: str, universe: list[int]) -> list[int]:
    """Resolve ``1,3:5,*`` against the sorted identifiers that exist."""
    if not universe:
        return []
    top = universe[-1]
    wanted: set[int] = set()
    for piece in spec.split(","):
        lo, _, hi = piece.partition(":")
        try:
            a = top if lo == "*" else int(lo)
            b = a if not hi else (top if hi == "*" else int(hi))
        except ValueError as exc:
            raise ProtocolError(f"bad sequence set {spec!r}") from exc
        lo_v, hi_v = min(a, b), max(a, b)
        wanted.update(n for n in universe if lo_v <= n <= hi_v)
    return sorted(wanted)


def internaldate(path: Path, data: bytes) -> str:
    stamp = header_date(data)
    if stamp is None:
        stamp = datetime.fromtimestamp(int(path.stat().st_mtime), tz=timezone.utc)
    return stamp.astimezone(timezone.utc).strftime("%d-%b-%Y %H:%M:%S +0000")


class _Mailbox:
    """Per-connection view of one selected folder."""

    def __init__(self, root: Path, name: str, path: Path) -> None:
        self.root, self.name, self.path = root, name, path
        self.uids: dict[int, str] = {}
        self.deleted: set[int] = set()
        files = sorted(message_files(path / "new") + message_files(path / "cur"), key=lambda p: p.name)
        for n, file in enumerate(files, start=1):
            self.uids[n] = file.name
        self.next_uid = len(files) + 1

    def file_of(self, uid: int) -> Path | None:
        name = self.uids.get(uid)
        if name is None:
            return None
        for sub in ("new", "cur"):
            candidate = self.path / sub / name
            if candidate.is_file():
                return candidate
        return None

    def sync(self) -> None:
        """Forget UIDs whose files vanished and adopt files added behind our back."""
        known = set(self.uids.values())
        for uid in [u for u in self.uids if self.file_of(u) is None]:
            del self.uids[uid]
            self.deleted.discard(uid)
        for file in sorted(message_files(self.path / "new") + message_files(self.path / "cur"), key=lambda p: p.name):
            if file.name not in known:
                self.uids[self.next_uid] = file.name
                self.next_uid += 1

    def ordered(self) -> list[int]:
        return sorted(self.uids)

    def seq_of(self, uid: int) -> int:
        return self.ordered().index(uid) + 1

    def flags(self, uid: int) -> list[str]:
        file = self.file_of(uid)
        out = []
        if file is not None and file.parent.name == "cur":
            out.append("\\Seen")
        if uid in self.deleted:
            out.append("\\Deleted")
        return out

    def set_seen(self, uid: int, seen: bool) -> None:
        file = self.file_of(uid)
        if file is None:
            return
        want = "cur" if seen else "new"
        if file.parent.name != want:
            (self.path / want).mkdir(exist_ok=True)
            os.rename(file, self.path / want / file.name)


class _Handler(socketserver.StreamRequestHandler):
    server: "LoopbackServer"

    def setup(self) -> None:
        super().setup()
        self.authenticated = False
        self.mailbox: _Mailbox | None = None
        self.running = True

    # wire helpers

    def send(self, line: str | bytes) -> None:
        data = line.encode() if isinstance(line, str) else line
        self.server.record("S", data)
        self.wfile.write(data + b"\r\n")

    def read_command(self) -> bytes | None:
        line = self.rfile.readline(65536)
        if not line:
            return None
        line = line.rstrip(b"\r\n")
        # inline literals ({n}) are resolved into quoted strings
        while (m := re.search(rb"\{(\d+)\}$", line)) is not None:
            self.send("+ Ready for literal data")
            literal = self.rfile.read(int(m.group(1)))
            rest = self.rfile.readline(65536).rstrip(b"\r\n")
            escaped = literal.replace(b"\\", b"\\\\").replace(b'"', b'\\"')
            line = line[: m.start()] + b'"' + escaped + b'"' + rest
        self.server.record("C", line)
        return line

    def handle(self) -> None:
        caps = "IMAP4rev1 MOVE" if self.server.support_move else "IMAP4rev1"
        self.send(f"* OK [CAPABILITY {caps}] loopback IMAP ready")
        while self.running:
            try:
                line = self.read_command()
            except OSError:
                break
            if line is None:
                break
            if not line.strip():
                continue
            tag, _, rest = line.partition(b" ")
            tag_s = tag.decode("ascii", "replace")
            name, _, args = rest.partition(b" ")
            command = name.decode("ascii", "replace").upper()
            try:
                self.dispatch(tag_s, command, args)
            except ProtocolError as exc:
                self.send(f"{tag_s} BAD {exc}")
            except OSError as exc:
                log.warning("loopback server I/O error: %s", exc)
                self.send(f"{tag_s} NO [SERVERBUG] {exc}")

    def dispatch(self, tag: str, command: str, args: bytes) -> None:
        uid_mode = command == "UID"
        if uid_mode:
            sub, _, args = args.partition(b" ")
            command = sub.decode("ascii", "replace").upper()
            if command not in ("FETCH", "SEARCH", "STORE", "COPY", "MOVE"):
                raise ProtocolError(f"UID {command} not supported")
        handler = getattr(self, f"cmd_{command.lower()}", None)
        if handler is None:
            raise ProtocolError(f"unknown command {command}")
        if command not in ("CAPABILITY", "LOGIN", "LOGOUT", "NOOP") and not self.authenticated:
            self.send(f"{tag} NO not authenticated")
            return
        if command in ("SEARCH", "FETCH", "STORE", "COPY", "MOVE", "EXPUNGE", "CLOSE") and self.mailbox is None:
            self.send(f"{tag} NO no mailbox selected")
            return
        if command == "MOVE" and not self.server.support_move:
            raise ProtocolError("MOVE not supported")
        argv = tokenize(args)
        if uid_mode:
            handler(tag, argv, uid_mode=True)
        else:
            handler(tag, argv)

    # commands

    def cmd_capability(self, tag: str, argv: list) -> None:
        caps = "IMAP4rev1 MOVE" if self.server.support_move else "IMAP4rev1"
        self.send(f"* CAPABILITY {caps}")
        self.send(f"{tag} OK CAPABILITY completed")

    def cmd_noop(self, tag: str, argv: list) -> None:
        self.send(f"{tag} OK NOOP completed")

    def cmd_logout(self, tag: str, argv: list) -> None:
        self.send("* BYE loopback server logging out")
        self.send(f"{tag} OK LOGOUT completed")
        self.running = False

    def cmd_login(self, tag: str, argv: list) -> None:
        if len(argv) != 2:
            raise ProtocolError("LOGIN expects user and password")
        user, password = argv
        if (user, password) == (self.server.username, self.server.password):
            self.authenticated = True
            self.send(f"{tag} OK LOGIN completed")
        else:
            self.send(f"{tag} NO [AUTHENTICATIONFAILED] invalid credentials")

    def cmd_list(self, tag: str, argv: list) -> None:
        pattern = argv[1] if len(argv) > 1 else "*"
        for name in list_folders(self.server.root):
            if pattern in ("*", "%") or name == pattern or (pattern.upper() == "INBOX" and name.upper() == "INBOX"):
                self.send(f'* LIST (\\HasNoChildren) "/" "{name}"')
        self.send(f"{tag} OK LIST completed")

    def cmd_create(self, tag: str, argv: list) -> None:
        try:
            path = folder_path(self.server.root, str(argv[0]))
        except (ValueError, IndexError):
            self.send(f"{tag} NO invalid mailbox name")
            return
        (path / "new").mkdir(parents=True, exist_ok=True)
        (path / "cur").mkdir(parents=True, exist_ok=True)
        self.send(f"{tag} OK CREATE completed")

    def cmd_select(self, tag: str, argv: list) -> None:
        name = str(argv[0]) if argv else ""
        try:
            path = folder_path(self.server.root, name)
        except ValueError:
            path = None
        if path is None or not path.is_dir():
            self.mailbox = None
            self.send(f"{tag} NO [NONEXISTENT] no such mailbox")
            return
        box = _Mailbox(self.server.root, name, path)
        self.mailbox = box
        uids = box.ordered()
        self.send("* FLAGS (\\Seen \\Deleted)")
        self.send(f"* {len(uids)} EXISTS")
        self.send("* 0 RECENT")
        unseen = [u for u in uids if "\\Seen" not in box.flags(u)]
        if unseen:
            self.send(f"* OK [UNSEEN {box.seq_of(unseen[0])}] first unseen")
        self.send(f"* OK [UIDVALIDITY {UIDVALIDITY}] UIDs valid")
        self.send(f"* OK [UIDNEXT {box.next_uid}] predicted next UID")
        self.send(f"{tag} OK [READ-WRITE] SELECT completed")

    def _targets(self, spec: str, uid_mode: bool) -> list[int]:
        box = self.mailbox
        box.sync()
        ordered = box.ordered()
        if uid_mode:
            return parse_sequence_set(spec, ordered)
        seqs = parse_sequence_set(spec, list(range(1, len(ordered) + 1)))
        return [ordered[s - 1] for s in seqs]

    def cmd_search(self, tag: str, argv: list, uid_mode: bool = False) -> None:
        box = self.mailbox
        box.sync()
        criteria = [str(a).upper() for a in argv if isinstance(a, str)]
        if criteria and criteria[0] == "CHARSET":
            criteria = criteria[2:]
        hits = []
        for uid in box.ordered():
            flags = box.flags(uid)
            ok = True
            for c in criteria:
                if c == "ALL":
                    continue
                elif c == "UNSEEN":
                    ok &= "\\Seen" not in flags
                elif c == "SEEN":
                    ok &= "\\Seen" in flags
                elif c == "DELETED":
                    ok &= "\\Deleted" in flags
                elif c == "UNDELETED":
                    ok &= "\\Deleted" not in flags
                else:
                    raise ProtocolError(f"unsupported search key {c}")
            if ok:
                hits.append(uid if uid_mode else box.seq_of(uid))
        self.send("* SEARCH" + "".join(f" {h}" for h in hits))
        self.send(f"{tag} OK SEARCH completed")

    def cmd_fetch(self, tag: str, argv: list, uid_mode: bool = False) -> None:
        if len(argv) < 2:
            raise ProtocolError("FETCH expects a sequence set and items")
        items = argv[1] if isinstance(argv[1], list) else argv[1:]
        names = [str(i).upper() for i in items if isinstance(i, str)]
        if uid_mode and "UID" not in names:
            names.insert(0, "UID")
        box = self.mailbox
        for uid in self._targets(str(argv[0]), uid_mode):
            file = box.file_of(uid)
            if file is None:
                continue
            data = file.read_bytes()
            parts: list[bytes] = []
            literal = None
            for name in names:
                if name == "UID":
                    parts.append(f"UID {uid}".encode())
                elif name == "FLAGS":
                    parts.append(f"FLAGS ({' '.join(box.flags(uid))})".encode())
                elif name == "INTERNALDATE":
                    parts.append(f'INTERNALDATE "{internaldate(file, data)}"'.encode())
                elif name in ("RFC822.SIZE",):
                    parts.append(f"RFC822.SIZE {len(data)}".encode())
                elif name in ("BODY.PEEK[]", "BODY[]", "RFC822"):
                    if name != "BODY.PEEK[]":
                        box.set_seen(uid, True)
                    label = "RFC822" if name == "RFC822" else "BODY[]"
                    literal = (f"{label} {{{len(data)}}}".encode(), data)
                else:
                    raise ProtocolError(f"unsupported fetch item {name}")
            head = f"* {box.seq_of(uid)} FETCH (".encode() + b" ".join(parts)
            if literal is None:
                self.send(head + b")")
            else:
                sep = b" " if parts else b""
                self.send(head + sep + literal[0])
                self.server.record("S", f"<{len(literal[1])} literal bytes>".encode())
                self.wfile.write(literal[1] + b")\r\n")
        self.send(f"{tag} OK FETCH completed")

    def cmd_store(self, tag: str, argv: list, uid_mode: bool = False) -> None:
        if len(argv) < 3:
            raise ProtocolError("STORE expects a sequence set, an operation and flags")
        op = str(argv[1]).upper()
        silent = op.endswith(".SILENT")
        op = op.removesuffix(".SILENT")
        if op not in ("+FLAGS", "-FLAGS", "FLAGS"):
            raise ProtocolError(f"unsupported STORE operation {op}")
        flags = argv[2] if isinstance(argv[2], list) else argv[2:]
        flags = {str(f).capitalize() if not str(f).startswith("\\") else "\\" + str(f)[1:].capitalize() for f in flags}
        box = self.mailbox
        for uid in self._targets(str(argv[0]), uid_mode):
            current = set(box.flags(uid))
            if op == "+FLAGS":
                new = current | flags
            elif op == "-FLAGS":
                new = current - flags
            else:
                new = set(flags)
            box.set_seen(uid, "\\Seen" in new)
            if "\\Deleted" in new:
                box.deleted.add(uid)
            else:
                box.deleted.discard(uid)
            if not silent:
                prefix = f"UID {uid} " if uid_mode else ""
                self.send(f"* {box.seq_of(uid)} FETCH ({prefix}FLAGS ({' '.join(box.flags(uid))}))")
        self.send(f"{tag} OK STORE completed")

    def _transfer(self, tag: str, argv: list, uid_mode: bool, remove: bool) -> None:
        if len(argv) != 2:
            raise ProtocolError("expected a sequence set and a mailbox")
        try:
            dest = folder_path(self.server.root, str(argv[1]))
        except ValueError:
            self.send(f"{tag} NO invalid mailbox name")
            return
        if not dest.is_dir():
            self.send(f"{tag} NO [TRYCREATE] mailbox does not exist")
            return
        box = self.mailbox
        targets = self._targets(str(argv[0]), uid_mode)
        for uid in targets:
            file = box.file_of(uid)
            if file is None:
                continue
            sub = "cur" if "\\Seen" in box.flags(uid) else "new"
            (dest / sub).mkdir(exist_ok=True)
            out = dest / sub / free_message_name(dest, file.name)
            if remove:
                seq = box.seq_of(uid)
                os.rename(file, out)
                del box.uids[uid]
                box.deleted.discard(uid)
                self.send(f"* {seq} EXPUNGE")
            else:
                shutil.copy2(file, out)
        box.sync()
        verb = "MOVE" if remove else "COPY"
        self.send(f"{tag} OK {verb} completed")

    def cmd_copy(self, tag: str, argv: list, uid_mode: bool = False) -> None:
        self._transfer(tag, argv, uid_mode, remove=False)

    def cmd_move(self, tag: str, argv: list, uid_mode: bool = False) -> None:
        self._transfer(tag, argv, uid_mode, remove=True)

    def _expunge(self, announce: bool) -> None:
        box = self.mailbox
        for uid in sorted(box.deleted, reverse=True):
            file = box.file_of(uid)
            seq = box.seq_of(uid) if uid in box.uids else None
            if file is not None:
                file.unlink()
            box.uids.pop(uid, None)
            if announce and seq is not None:
                self.send(f"* {seq} EXPUNGE")
        box.deleted.clear()

    def cmd_expunge(self, tag: str, argv: list) -> None:
        self._expunge(announce=True)
        self.send(f"{tag} OK EXPUNGE completed")

    def cmd_close(self, tag: str, argv: list) -> None:
        self._expunge(announce=False)
        self.mailbox = None
        self.send(f"{tag} OK CLOSE completed")


class LoopbackServer(socketserver.TCPServer):
    """Single-threaded IMAP server; one client connection at a time."""

    allow_reuse_address = True

    def __init__(
        self,
        fixture_root: Path | str,
        port: int = 0,
        username: str = "tester@example.com",
        password: str = "loopback-secret",
        host: str = "127.0.0.1",
        support_move: bool = True,
    ) -> None:
        if not is_loopback(host):
            raise ValueError("the loopback server only binds loopback addresses")
        self.root = Path(fixture_root)
        if not self.root.is_dir():
            raise ValueError(f"fixture root {self.root} is not a directory")
        self.username = username
        self.password = password
        self.support_move = support_move
        self.trace: list[str] = []
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None
        try:
            super().__init__((host, port), _Handler)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(f"port {port} is already in use") from exc
            raise

    @property
    def port(self) -> int:
        return self.server_address[1]

    def record(self, direction: str, data: bytes) -> None:
        text = data.decode("utf-8", "replace")
        if direction == "C":
            parts = text.split(" ", 3)
            if len(parts) >= 3 and parts[1].upper() == "LOGIN":
                text = " ".join(parts[:3]) + " ***"
        with self._lock:
            self.trace.append(f"{direction}: {text}")

    def commands(self) -> list[str]:
        """Command names received so far, UID-prefixed where applicable."""
        out = []
        for line in self.trace:
            if not line.startswith("C: "):
                continue
            words = line[3:].split()
            if len(words) < 2:
                continue
            name = words[1].upper()
            if name == "UID" and len(words) > 2:
                name = f"UID {words[2].upper()}"
            out.append(name)
        return out

    def start(self) -> "LoopbackServer":
        self._thread = threading.Thread(target=self.serve_forever, name="loopback-imap", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "LoopbackServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_loopback(fixture_root: Path | str, port: int = 0, **kwargs) -> LoopbackServer:
    """Start a loopback IMAP server in a background thread and return it."""
    return LoopbackServer(fixture_root, port, **kwargs).start()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Serve a fixture mailbox over plaintext loopback IMAP.")
    parser.add_argument("root", type=Path, help="fixture store root")
    parser.add_argument("--port", type=int, default=1143)
    parser.add_argument("--user", default="tester@example.com")
    parser.add_argument("--password", default="loopback-secret")
    parser.add_argument("--no-move", action="store_true", help="hide the MOVE capability")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    server = LoopbackServer(args.root, args.port, args.user, args.password, support_move=not args.no_move)
    log.info("serving %s on 127.0.0.1:%d", args.root, server.port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
