"""Offline mailbox backed by a maildir-style directory tree.

Layout: ``<root>/<Folder>/new/*.eml`` holds unseen mail and
``<root>/<Folder>/cur/*.eml`` holds seen mail.
"""

from __future__ import annotations

import os
from datetime import datetime, timezone
from pathlib import Path

from ..errors import ActionFailure, FetchFailure, NoSuchFolder
from ..message_model import RawMessage
from .base import (
    FolderSummary,
    MessageHandle,
    StoreAction,
    folder_path,
    free_message_name,
    header_date,
    message_files,
)


def received_time(path: Path, data: bytes) -> datetime:
    """The store-side timestamp of a fixture message (Date header, else mtime)."""
    stamp = header_date(data)
    if stamp is None:
        stamp = datetime.fromtimestamp(int(path.stat().st_mtime), tz=timezone.utc)
    return stamp


class FixtureSession:
    def __init__(self, root: Path | str, trash_folder: str = "Trash") -> None:
        self.root = Path(root)
        self.trash_folder = trash_folder
        self.folder: str | None = None
        self._dir: Path | None = None
        if not self.root.is_dir():
            raise NoSuchFolder(f"fixture root {self.root} does not exist")

    def select_folder(self, folder: str) -> FolderSummary:
        try:
            path = folder_path(self.root, folder)
        except ValueError as exc:
            raise NoSuchFolder(str(exc)) from exc
        if not path.is_dir():
            raise NoSuchFolder(folder)
        self.folder, self._dir = folder, path
        unseen = len(message_files(path / "new"))
        return FolderSummary(unseen + len(message_files(path / "cur")), unseen)

    def fetch_unseen_top(self, top: int) -> list[tuple[MessageHandle, RawMessage]]:
        if self._dir is None:
            raise FetchFailure("no folder selected")
        if top <= 0:
            return []
        entries = []
        try:
            for path in message_files(self._dir / "new"):
                data = path.read_bytes()
                entries.append((received_time(path, data), path.name, data))
        except OSError as exc:
            raise FetchFailure(str(exc)) from exc
        # newest first; the file name breaks ties deterministically
        entries.sort(key=lambda e: (-e[0].timestamp(), e[1]))
        out = []
        for stamp, name, data in entries[:top]:
            handle = MessageHandle(store_uid=name, folder=self.folder, seen=False)
            out.append((handle, RawMessage(data, handle, stamp)))
        return out

    def _locate(self, handle: MessageHandle) -> Path:
        base = folder_path(self.root, handle.folder)
        for sub in ("new", "cur"):
            candidate = base / sub / handle.store_uid
            if candidate.is_file():
                return candidate
        raise ActionFailure(f"message {handle.store_uid!r} not found in {handle.folder!r}")

    def _move(self, source: Path, target_folder: str) -> Path:
        try:
            dest_dir = folder_path(self.root, target_folder)
        except ValueError as exc:
            raise ActionFailure(str(exc)) from exc
        try:
            (dest_dir / "new").mkdir(parents=True, exist_ok=True)
            (dest_dir / "cur").mkdir(parents=True, exist_ok=True)
            dest = dest_dir / "cur" / free_message_name(dest_dir, source.name)
            os.rename(source, dest)
        except OSError as exc:
            raise ActionFailure(f"move to {target_folder!r} failed: {exc}") from exc
        return dest

    def apply_action(self, action: StoreAction) -> str:
        source = self._locate(action.handle)
        if action.kind == "mark_seen":
            if source.parent.name == "new":
                try:
                    (source.parent.parent / "cur").mkdir(exist_ok=True)
                    os.rename(source, source.parent.parent / "cur" / source.name)
                except OSError as exc:
                    raise ActionFailure(f"mark_seen failed: {exc}") from exc
            return "OK seen"
        target = action.target if action.kind == "move_to_label" else self.trash_folder
        dest = self._move(source, target)
        return f"OK moved to {dest.relative_to(self.root).as_posix()}"

    def close(self) -> None:
        self.folder = self._dir = None
