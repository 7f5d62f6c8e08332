"""Keyword rules: route messages to labels, sort attachments, screen resumes."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import ConfigSemantic, ConfigSyntax
from .message_model import Attachment, ParsedMessage, normalize_text

MATCH_FIELDS = ("subject", "body", "sender")
DEFAULT_ACTIONS = ("trash", "keep")

PAPER_DEFAULT_CONFIG = {
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
        "eligibility_keywords": [],
        "resume_folder": "Resumes",
    },
}


@dataclass(frozen=True)
class Rule:
    label: str
    keywords: tuple[str, ...]
    match_fields: frozenset[str] = frozenset({"subject"})
    priority: int = 0

    def __post_init__(self) -> None:
        if not self.label:
            raise ConfigSemantic("rule label must be non-empty")
        if not self.keywords:
            raise ConfigSemantic(f"rule {self.label!r} has no keywords")
        if any(not kw or kw != normalize_text(kw).text for kw in self.keywords):
            raise ConfigSemantic(f"rule {self.label!r} has an empty or unnormalized keyword")
        unknown = set(self.match_fields) - set(MATCH_FIELDS)
        if unknown:
            raise ConfigSemantic(f"rule {self.label!r}: unknown match_fields {sorted(unknown)}")
        if not self.match_fields:
            raise ConfigSemantic(f"rule {self.label!r}: match_fields must be non-empty")


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...] = ()
    default_action: str = "trash"
    trash_folder: str = "Trash"

    def __post_init__(self) -> None:
        if self.default_action not in DEFAULT_ACTIONS:
            raise ConfigSemantic(f"default_action must be one of {DEFAULT_ACTIONS}")
        if not self.trash_folder:
            raise ConfigSemantic("trash_folder must be non-empty")
        priorities = [r.priority for r in self.rules]
        if len(set(priorities)) != len(priorities):
            raise ConfigSemantic(f"duplicate rule priorities in {priorities}")
        object.__setattr__(self, "rules", tuple(sorted(self.rules, key=lambda r: r.priority)))

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rules]


@dataclass(frozen=True)
class SenderBlocklist:
    addresses: frozenset[str] = frozenset()

    def __contains__(self, address: object) -> bool:
        return isinstance(address, str) and address.strip().casefold() in self.addresses

    @classmethod
    def of(cls, addresses: Iterable[str]) -> "SenderBlocklist":
        return cls(frozenset(a.strip().casefold() for a in addresses if a.strip()))


@dataclass(frozen=True)
class Decision:
    kind: str  # "route", "trash" or "keep"
    reason: str  # "keyword", "blocklist" or "default"
    label: str | None = None
    matched_rule_priority: int | None = None
    matched_keyword: str | None = None

    def __post_init__(self) -> None:
        routed = self.kind == "route"
        if routed != (self.label is not None) or routed != (self.reason == "keyword"):
            raise ValueError(f"inconsistent decision {self!r}")

    @property
    def outcome(self) -> str:
        """Label for routed mail, otherwise ``trash`` or ``keep``."""
        return self.label if self.kind == "route" else self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "reason": self.reason,
            "matched_rule_priority": self.matched_rule_priority,
            "matched_keyword": self.matched_keyword,
        }


@dataclass(frozen=True)
class AttachmentRules:
    useful_keywords: tuple[str, ...] = ("resume", "cv", "bill", "invoice")
    subfolder_map: tuple[tuple[tuple[str, ...], str], ...] = (
        (("resume", "cv"), "Resumes"),
        (("bill",), "Bills"),
        (("invoice",), "Invoices"),
    )
    eligibility_keywords: tuple[str, ...] = ()
    resume_folder: str = "Resumes"

    def __post_init__(self) -> None:
        useful = set(self.useful_keywords)
        for keywords, folder in self.subfolder_map:
            if not folder:
                raise ConfigSemantic("attachment subfolder name must be non-empty")
            missing = set(keywords) - useful
            if missing:
                raise ConfigSemantic(
                    f"subfolder {folder!r} keywords {sorted(missing)} are not useful_keywords"
                )
        for kw in (*self.useful_keywords, *self.eligibility_keywords):
            if not kw:
                raise ConfigSemantic("attachment keywords must be non-empty")

    @property
    def folders(self) -> list[str]:
        return [folder for _, folder in self.subfolder_map]


class RuleBundle(NamedTuple):
    ruleset: RuleSet
    attachment_rules: AttachmentRules
    blocklist: SenderBlocklist


class AttachmentClass(NamedTuple):
    useful: bool
    subfolder: str | None


# loading

def _keywords(raw, where: str) -> tuple[str, ...]:
    if isinstance(raw, str) or not isinstance(raw, list):
        raise ConfigSemantic(f"{where}: keywords must be a list of strings")
    out = []
    for item in raw:
        if not isinstance(item, str):
            raise ConfigSemantic(f"{where}: keyword {item!r} is not a string")
        kw = normalize_text(item).text
        if not kw:
            raise ConfigSemantic(f"{where}: empty keyword")
        out.append(kw)
    return tuple(out)


def _rule(raw: dict, index: int) -> Rule:
    where = f"rules[{index}]"
    if not isinstance(raw, dict):
        raise ConfigSemantic(f"{where} must be an object")
    priority = raw.get("priority", index + 1)
    if isinstance(priority, bool) or not isinstance(priority, int):
        raise ConfigSemantic(f"{where}: priority must be an integer")
    fields = raw.get("match_fields", ["subject"])
    if isinstance(fields, str) or not isinstance(fields, list):
        raise ConfigSemantic(f"{where}: match_fields must be a list")
    return Rule(
        label=str(raw.get("label", "")).strip(),
        keywords=_keywords(raw.get("keywords", []), where),
        match_fields=frozenset(str(f).strip().lower() for f in fields),
        priority=priority,
    )


def parse_blocklist(text: str) -> SenderBlocklist:
    """One address per line; ``#`` starts a comment; blank lines are ignored."""
    return SenderBlocklist.of(line.split("#", 1)[0] for line in text.splitlines())


def load_ruleset(config_text: str | None = None, blocklist_text: str | None = None) -> RuleBundle:
    """Parse a JSON rules document (``None`` means the shipped defaults)."""
    if config_text is None:
        doc = PAPER_DEFAULT_CONFIG
    else:
        try:
            doc = json.loads(config_text)
        except json.JSONDecodeError as exc:
            raise ConfigSyntax(f"rules config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigSyntax("rules config must be a JSON object")

    rules_raw = doc.get("rules", [])
    if not isinstance(rules_raw, list):
        raise ConfigSemantic("'rules' must be a list")
    ruleset = RuleSet(
        rules=tuple(_rule(r, i) for i, r in enumerate(rules_raw)),
        default_action=doc.get("default_action", "trash"),
        trash_folder=doc.get("trash_folder", "Trash"),
    )

    att = doc.get("attachment", PAPER_DEFAULT_CONFIG["attachment"])
    if not isinstance(att, dict):
        raise ConfigSemantic("'attachment' must be an object")
    defaults = PAPER_DEFAULT_CONFIG["attachment"]
    subfolders = att.get("subfolders", defaults["subfolders"])
    if not isinstance(subfolders, list) or not all(isinstance(s, dict) for s in subfolders):
        raise ConfigSemantic("attachment.subfolders must be a list of objects")
    attachment_rules = AttachmentRules(
        useful_keywords=_keywords(att.get("useful_keywords", defaults["useful_keywords"]), "attachment"),
        subfolder_map=tuple(
            (_keywords(s.get("keywords", []), f"attachment.subfolders[{i}]"), str(s.get("folder", "")).strip())
            for i, s in enumerate(subfolders)
        ),
        eligibility_keywords=_keywords(
            att.get("eligibility_keywords", defaults["eligibility_keywords"]), "attachment"
        ),
        resume_folder=str(att.get("resume_folder", defaults["resume_folder"])),
    )

    blocked = doc.get("blocklist", [])
    if isinstance(blocked, str) or not isinstance(blocked, list):
        raise ConfigSemantic("'blocklist' must be a list of addresses")
    blocklist = SenderBlocklist.of(blocked)
    if blocklist_text is not None:
        blocklist = SenderBlocklist(blocklist.addresses | parse_blocklist(blocklist_text).addresses)
    return RuleBundle(ruleset, attachment_rules, blocklist)


# classification

def _field_text(msg: ParsedMessage, name: str) -> str:
    if name == "subject":
        return msg.subject
    if name == "body":
        return msg.body_text
    return f"{msg.sender_name} {msg.sender}"


def classify_message(msg: ParsedMessage, rules: RuleSet, blocklist: SenderBlocklist) -> Decision:
    if msg.sender in blocklist:
        return Decision("trash", "blocklist")
    normalized: dict[str, str] = {}
    for rule in rules.rules:
        for name in MATCH_FIELDS:
            if name not in rule.match_fields:
                continue
            if name not in normalized:
                normalized[name] = normalize_text(_field_text(msg, name)).text
            for kw in rule.keywords:
                if kw in normalized[name]:
                    return Decision("route", "keyword", rule.label, rule.priority, kw)
    if rules.default_action == "trash":
        return Decision("trash", "default")
    return Decision("keep", "default")


def attachment_match_text(att: Attachment, msg_subject_normalized: str) -> str:
    return normalize_text(" ".join([att.filename, att.text_content or "", msg_subject_normalized])).text


def classify_attachment_useful(
    att: Attachment, msg_subject_normalized: str, arules: AttachmentRules
) -> AttachmentClass:
    """Decide whether an attachment is useful and which category folder it belongs in.

    ``subfolder`` is ``None`` for useful attachments no category claims; those
    go to the generic Useful folder.
    """
    text = attachment_match_text(att, msg_subject_normalized)
    if not any(kw in text for kw in arules.useful_keywords):
        return AttachmentClass(False, None)
    for keywords, folder in arules.subfolder_map:
        if any(kw in text for kw in keywords):
            return AttachmentClass(True, folder)
    return AttachmentClass(True, None)


def screen_eligibility(att: Attachment, arules: AttachmentRules, subfolder: str | None = None) -> str:
    """Return ``eligible``, ``not_eligible`` or ``not_applicable``.

    ``subfolder`` is the category assigned by :func:`classify_attachment_useful`;
    when omitted the attachment is classified on its own (filename and text).
    """
    if subfolder is None:
        subfolder = classify_attachment_useful(att, "", arules).subfolder
    if subfolder != arules.resume_folder:
        return "not_applicable"
    text = normalize_text(att.text_content or "").text
    if all(kw in text for kw in arules.eligibility_keywords):
        return "eligible"
    return "not_eligible"
