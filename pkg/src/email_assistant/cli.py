"""Command-line entry point: one triage batch per invocation.

Runs dry by default; ``--execute`` is needed before anything in the mailbox
or on disk (besides reports) changes.

Exit codes: 0 ok, 2 configuration error, 3 authentication error,
4 connect/fetch error, 5 finished with per-message errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config, resolve_credentials
from .errors import AuthFailure, ConfigError, ConnectFailure, FetchFailure, NoSuchFolder, StoreError
from .pipeline import run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_AUTH = 3
EXIT_CONNECT = 4
EXIT_PARTIAL = 5

log = logging.getLogger("email_assistant")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="email-assistant",
        description="Sort unseen mail by keyword rules and file its attachments.",
    )
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--execute", action="store_true", help="apply moves and write files (default: dry run)")
    p.add_argument("--top", type=int, help="maximum number of unseen messages to process")
    p.add_argument("--mailbox", help="folder to process (default Inbox)")
    p.add_argument("--fixture", type=Path, help="use a local fixture mailbox directory instead of IMAP")
    p.add_argument("--report-dir", type=Path, help="where audit logs and reports go")
    p.add_argument("--layout-root", type=Path, help="where attachments are filed")
    p.add_argument("--manifest", type=Path, help="expected labels, enables accuracy evaluation")
    p.add_argument("--rules", type=Path, help="JSON rules document")
    p.add_argument("--blocklist", type=Path, help="sender blocklist, one address per line")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        "top": args.top,
        "mail_folder": args.mailbox,
        "fixture_root": args.fixture,
        "report_dir": args.report_dir,
        "layout_root": args.layout_root,
        "manifest_path": args.manifest,
        "rules_path": args.rules,
        "blocklist_path": args.blocklist,
        "run_mode": "execute" if args.execute else None,
    }
    if args.fixture is not None:
        overrides["mode"] = "fixture"
    try:
        cfg = load_config(args.config, overrides)
        creds = None if cfg.store.mode == "fixture" else resolve_credentials(cfg)
        report = run_pipeline(cfg, creds)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AuthFailure as exc:
        print(f"authentication failed: {exc}", file=sys.stderr)
        return EXIT_AUTH
    except (ConnectFailure, FetchFailure, NoSuchFolder, StoreError) as exc:
        print(f"mailbox error: {exc}", file=sys.stderr)
        return EXIT_CONNECT

    json.dump(report.to_dict(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_PARTIAL if report.errors else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
