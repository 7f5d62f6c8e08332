"""Mailbox access: IMAP over TLS, a local fixture tree, or a loopback test server."""

from __future__ import annotations

from .base import (
    Credentials,
    FolderSummary,
    MessageHandle,
    StoreAction,
    StoreConfig,
    StoreSession,
)
from .fixture import FixtureSession
from .imap import ImapSession
from .loopback import LoopbackServer, serve_loopback


def connect_and_authenticate(cfg: StoreConfig, creds: Credentials | None = None) -> StoreSession:
    """Open an authenticated session for ``cfg``.

    Fixture mode needs no credentials; both network modes do.
    """
    if cfg.mode == "fixture":
        return FixtureSession(cfg.fixture_root, trash_folder=cfg.trash_folder)
    if creds is None:
        raise ValueError(f"{cfg.mode} mode requires credentials")
    return ImapSession.connect(cfg, creds)


__all__ = [
    "Credentials",
    "FixtureSession",
    "FolderSummary",
    "ImapSession",
    "LoopbackServer",
    "MessageHandle",
    "StoreAction",
    "StoreConfig",
    "StoreSession",
    "connect_and_authenticate",
    "serve_loopback",
]
