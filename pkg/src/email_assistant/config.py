"""Application configuration and credential resolution.

The config file is a flat JSON object. Every key is optional::

    {
      "server": "imap.gmail.com", "port": 993, "mail_folder": "Inbox",
      "timeout_ms": 30000, "top": 9, "mode": "imap_tls",
      "fixture_root": null, "trash_folder": null,
      "rules_path": null, "blocklist_path": null, "manifest_path": null,
      "layout_root": "attachments", "report_dir": "reports",
      "credentials_file": null, "run_mode": "dry_run",
      "rename_template": {"pattern": "...", "separator": "_",
                          "highest_qualification": null},
      "save_not_useful": true, "seconds_per_email": 78,
      "invitations": {"enabled": true, "subject": "...", "body": "...",
                      "from_address": null}
    }

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import getpass
import json
import os
import stat
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping

from .attachments import DEFAULT_INVITATION_BODY, DEFAULT_INVITATION_SUBJECT, RenameTemplate
from .audit import SECONDS_PER_EMAIL
from .errors import ConfigSemantic, ConfigSyntax, NoCredentials
from .mailstore.base import (
    DEFAULT_FOLDER,
    DEFAULT_PORT,
    DEFAULT_SERVER,
    DEFAULT_TIMEOUT_MS,
    DEFAULT_TOP,
    Credentials,
    StoreConfig,
)
from .rules import RuleBundle, load_ruleset

ENV_USER = "EMAIL_ASSISTANT_USER"
ENV_PASS = "EMAIL_ASSISTANT_PASS"
RUN_MODES = ("dry_run", "execute")

_KNOWN_KEYS = {
    "server", "port", "mail_folder", "timeout_ms", "top", "mode", "fixture_root",
    "trash_folder", "rules_path", "blocklist_path", "manifest_path", "layout_root",
    "report_dir", "credentials_file", "run_mode", "rename_template", "save_not_useful",
    "seconds_per_email", "invitations",
}


@dataclass(frozen=True)
class InvitationConfig:
    enabled: bool = True
    subject: str = DEFAULT_INVITATION_SUBJECT
    body: str = DEFAULT_INVITATION_BODY
    from_address: str | None = None


@dataclass(frozen=True)
class AppConfig:
    store: StoreConfig = field(default_factory=StoreConfig)
    rules_path: Path | None = None
    blocklist_path: Path | None = None
    layout_root: Path = Path("attachments")
    report_dir: Path = Path("reports")
    rename_template: RenameTemplate = field(default_factory=RenameTemplate)
    highest_qualification: str | None = None
    run_mode: str = "dry_run"
    manifest_path: Path | None = None
    credentials_file: Path | None = None
    save_not_useful: bool = True
    seconds_per_email: float = SECONDS_PER_EMAIL
    invitations: InvitationConfig = field(default_factory=InvitationConfig)

    @property
    def dry_run(self) -> bool:
        return self.run_mode == "dry_run"

    def load_rules(self) -> RuleBundle:
        rules_text = _read_text(self.rules_path) if self.rules_path else None
        block_text = _read_text(self.blocklist_path) if self.blocklist_path else None
        return load_ruleset(rules_text, block_text)


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigSemantic(f"cannot read {path}: {exc}") from exc


def _path(value: Any, base: Path, key: str) -> Path | None:
    if value is None:
        return None
    if not isinstance(value, str) or not value:
        raise ConfigSemantic(f"{key} must be a non-empty path string")
    p = Path(value).expanduser()
    return p if p.is_absolute() else base / p


def _expect(value: Any, kind: type | tuple, key: str) -> Any:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    if not isinstance(value, kinds) or (isinstance(value, bool) and bool not in kinds):
        raise ConfigSemantic(f"{key} has the wrong type: {value!r}")
    return value


def build_config(doc: Mapping[str, Any], base: Path | None = None) -> AppConfig:
    """Validate a config mapping and apply defaults."""
    base = base or Path.cwd()
    if not isinstance(doc, Mapping):
        raise ConfigSyntax("config must be a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigSemantic(f"unknown config keys: {sorted(unknown)}")

    fixture_root = _path(doc.get("fixture_root"), base, "fixture_root")
    mode = doc.get("mode") or ("fixture" if fixture_root is not None else "imap_tls")
    rules_path = _path(doc.get("rules_path"), base, "rules_path")
    blocklist_path = _path(doc.get("blocklist_path"), base, "blocklist_path")
    manifest_path = _path(doc.get("manifest_path"), base, "manifest_path")
    credentials_file = _path(doc.get("credentials_file"), base, "credentials_file")
    for key, p in (("rules_path", rules_path), ("blocklist_path", blocklist_path),
                   ("manifest_path", manifest_path), ("fixture_root", fixture_root)):
        if p is not None and not p.exists():
            raise ConfigSemantic(f"{key} {p} does not exist")

    config = AppConfig(
        rules_path=rules_path,
        blocklist_path=blocklist_path,
        manifest_path=manifest_path,
        credentials_file=credentials_file,
        layout_root=_path(doc.get("layout_root", "attachments"), base, "layout_root"),
        report_dir=_path(doc.get("report_dir", "reports"), base, "report_dir"),
        run_mode=doc.get("run_mode", "dry_run"),
        save_not_useful=_expect(doc.get("save_not_useful", True), bool, "save_not_useful"),
        seconds_per_email=float(_expect(doc.get("seconds_per_email", SECONDS_PER_EMAIL), (int, float), "seconds_per_email")),
    )
    if config.run_mode not in RUN_MODES:
        raise ConfigSemantic(f"run_mode must be one of {RUN_MODES}")
    if config.seconds_per_email < 0:
        raise ConfigSemantic("seconds_per_email must be non-negative")

    tmpl = _expect(doc.get("rename_template", {}), dict, "rename_template")
    inv = _expect(doc.get("invitations", {}), dict, "invitations")
    rules = config.load_rules()
    store = StoreConfig(
        server=_expect(doc.get("server", DEFAULT_SERVER), str, "server"),
        port=doc.get("port", DEFAULT_PORT),
        mail_folder=_expect(doc.get("mail_folder", DEFAULT_FOLDER), str, "mail_folder"),
        timeout_ms=doc.get("timeout_ms", DEFAULT_TIMEOUT_MS),
        top=doc.get("top", DEFAULT_TOP),
        mode=mode,
        trash_folder=doc.get("trash_folder") or rules.ruleset.trash_folder,
        fixture_root=fixture_root,
    )
    return replace(
        config,
        store=store,
        rename_template=RenameTemplate(
            pattern=_expect(tmpl.get("pattern", RenameTemplate.pattern), str, "rename_template.pattern"),
            separator=_expect(tmpl.get("separator", RenameTemplate.separator), str, "rename_template.separator"),
        ),
        highest_qualification=tmpl.get("highest_qualification"),
        invitations=InvitationConfig(
            enabled=_expect(inv.get("enabled", True), bool, "invitations.enabled"),
            subject=_expect(inv.get("subject", DEFAULT_INVITATION_SUBJECT), str, "invitations.subject"),
            body=_expect(inv.get("body", DEFAULT_INVITATION_BODY), str, "invitations.body"),
            from_address=inv.get("from_address"),
        ),
    )


def load_config(path: Path | str | None = None, overrides: Mapping[str, Any] | None = None) -> AppConfig:
    """Read a JSON config file (or none) and apply command-line overrides."""
    doc: dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigSemantic(f"cannot read config {path}: {exc}") from exc
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigSyntax(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigSyntax("config must be a JSON object")
        base = path.resolve().parent
    path_keys = {"fixture_root", "rules_path", "blocklist_path", "manifest_path", "report_dir", "layout_root"}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        # command-line paths are relative to the working directory, not the config file
        doc[key] = str(Path(value).expanduser().resolve()) if key in path_keys else value
    return build_config(doc, base)


def _read_credentials_file(path: Path) -> Credentials:
    try:
        mode = path.stat().st_mode
    except OSError as exc:
        raise NoCredentials(f"cannot read credentials file {path}: {exc}") from exc
    if mode & (stat.S_IRWXG | stat.S_IRWXO):
        raise ConfigSemantic(f"credentials file {path} must not be accessible by group or others")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigSyntax(f"credentials file {path} is not a JSON object") from exc
    if not isinstance(doc, dict) or not doc.get("email") or not doc.get("password"):
        raise ConfigSemantic(f"credentials file {path} needs 'email' and 'password'")
    return Credentials(str(doc["email"]), str(doc["password"]))


def _interactive_prompt() -> Credentials | None:
    if not sys.stdin.isatty():
        return None
    email = input("E-mail address: ").strip()
    password = getpass.getpass("Password: ")
    if not email or not password:
        return None
    return Credentials(email, password)


def resolve_credentials(
    cfg: AppConfig,
    environ: Mapping[str, str] | None = None,
    prompt: Callable[[], Credentials | None] | None = _interactive_prompt,
) -> Credentials:
    """Environment variables first, then the credentials file, then a prompt."""
    environ = os.environ if environ is None else environ
    user, password = environ.get(ENV_USER), environ.get(ENV_PASS)
    if user and password:
        return Credentials(user, password)
    if cfg.credentials_file is not None and cfg.credentials_file.exists():
        return _read_credentials_file(cfg.credentials_file)
    if prompt is not None:
        creds = prompt()
        if creds is not None:
            return creds
    raise NoCredentials(
        f"no credentials: set {ENV_USER}/{ENV_PASS}, configure credentials_file, or run interactively"
    )
