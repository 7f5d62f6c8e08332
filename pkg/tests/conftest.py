from __future__ import annotations

import hashlib
from datetime import datetime, timezone
from pathlib import Path

import pytest

from email_assistant.config import load_config
from email_assistant.fixtures import write_workflow_fixture

TEST_PASSWORD = "loopback-secret-7f3a9c"
FIXED_CLOCK = lambda: datetime(2022, 1, 20, 12, 0, 0, tzinfo=timezone.utc)  # noqa: E731


def tree_digest(root: Path) -> dict[str, str]:
    """Map every file under root (relative path) to its SHA-256."""
    root = Path(root)
    if not root.exists():
        return {}
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def workflow_config(paths: dict[str, Path], work: Path, execute: bool = False, **extra):
    overrides = {
        "fixture_root": paths["mailbox"],
        "rules_path": paths["rules"],
        "blocklist_path": paths["blocklist"],
        "manifest_path": paths["manifest"],
        "report_dir": work / "reports",
        "layout_root": work / "attachments",
        "run_mode": "execute" if execute else "dry_run",
        "mode": "fixture",
    }
    overrides.update(extra)
    return load_config(None, overrides)


@pytest.fixture
def workflow(tmp_path):
    paths = write_workflow_fixture(tmp_path / "fixture")
    return paths, tmp_path
