from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from email_assistant.errors import ConfigSemantic, ConfigSyntax
from email_assistant.message_model import Attachment, ParsedMessage
from email_assistant.rules import (
    AttachmentRules,
    Decision,
    Rule,
    RuleSet,
    SenderBlocklist,
    classify_attachment_useful,
    classify_message,
    load_ruleset,
    parse_blocklist,
    screen_eligibility,
)

DEFAULT = load_ruleset()
KEYWORDS = {kw: r.label for r in DEFAULT.ruleset.rules for kw in r.keywords}
NO_BLOCK = SenderBlocklist()


def message(subject: str = "", sender: str = "someone@example.com", body: str = "", name: str = "") -> ParsedMessage:
    return ParsedMessage(
        unique_id="B-000000", sender=sender, recipients=("me@x",), subject=subject,
        date=datetime(2022, 1, 15, tzinfo=timezone.utc), body_text=body, sender_name=name,
    )


# load_ruleset

def test_default_rules_match_the_documented_pair():
    rules = DEFAULT.ruleset.rules
    assert [(r.priority, r.label, r.keywords, r.match_fields) for r in rules] == [
        (1, "Work", ("resume",), frozenset({"subject"})),
        (2, "Receipt", ("bill", "invoice"), frozenset({"subject"})),
    ]
    assert DEFAULT.ruleset.default_action == "trash"
    assert DEFAULT.attachment_rules.useful_keywords == ("resume", "cv", "bill", "invoice")


def test_keywords_are_normalized_on_load():
    doc = {"rules": [{"label": "Work", "keywords": ["  RESUME "], "priority": 3}]}
    (rule,) = load_ruleset(json.dumps(doc)).ruleset.rules
    assert rule.keywords == ("resume",)


def test_rules_sorted_by_priority():
    doc = {"rules": [
        {"label": "B", "keywords": ["b"], "priority": 5},
        {"label": "A", "keywords": ["a"], "priority": -2},
    ]}
    assert load_ruleset(json.dumps(doc)).ruleset.labels == ["A", "B"]


@pytest.mark.parametrize("doc", [
    {"rules": [{"label": "A", "keywords": ["a"], "priority": 1}, {"label": "B", "keywords": ["b"], "priority": 1}]},
    {"rules": [{"label": "A", "keywords": [""], "priority": 1}]},
    {"rules": [{"label": "A", "keywords": [], "priority": 1}]},
    {"rules": [{"label": "A", "keywords": ["a"], "match_fields": ["headers"], "priority": 1}]},
    {"rules": [{"label": "", "keywords": ["a"], "priority": 1}]},
    {"rules": [], "default_action": "archive"},
    {"rules": [], "attachment": {"useful_keywords": ["bill"], "subfolders": [{"keywords": ["cv"], "folder": "R"}]}},
])
def test_semantic_errors(doc):
    with pytest.raises(ConfigSemantic):
        load_ruleset(json.dumps(doc))


@pytest.mark.parametrize("text", ["{", "[]", "null"])
def test_syntax_errors(text):
    with pytest.raises(ConfigSyntax):
        load_ruleset(text)


def test_empty_rules_with_keep():
    bundle = load_ruleset(json.dumps({"rules": [], "default_action": "keep"}))
    d = classify_message(message("My resume"), bundle.ruleset, NO_BLOCK)
    assert (d.kind, d.reason) == ("keep", "default")


def test_blocklist_file_format():
    bl = parse_blocklist("# junk senders\n\nSpam@Example.COM  # inline comment\n  other@x.test\n")
    assert "spam@example.com" in bl
    assert "OTHER@X.TEST" in bl
    assert "nobody@x.test" not in bl
    assert len(bl.addresses) == 2


# classify_message

@pytest.mark.parametrize("subject, kind, label, reason", [
    ("My Resume for the role", "route", "Work", "keyword"),
    ("Electricity Bill March", "route", "Receipt", "keyword"),
    ("WIN A FREE CRUISE", "trash", None, "default"),
    ("Resume and Invoice", "route", "Work", "keyword"),
    ("Resumes inside", "route", "Work", "keyword"),
])
def test_classify_examples(subject, kind, label, reason):
    d = classify_message(message(subject), DEFAULT.ruleset, NO_BLOCK)
    assert (d.kind, d.label, d.reason) == (kind, label, reason)


def test_blocklisted_sender_is_trashed():
    bl = SenderBlocklist.of(["offers@spam-blast.test"])
    d = classify_message(message("Resume attached", sender="Offers@Spam-Blast.test"), DEFAULT.ruleset, bl)
    assert (d.kind, d.reason) == ("trash", "blocklist")


def test_body_matching_is_opt_in():
    doc = {"rules": [{"label": "Work", "keywords": ["resume"], "match_fields": ["body"], "priority": 1}]}
    rules = load_ruleset(json.dumps(doc)).ruleset
    assert classify_message(message("hello", body="my RESUME"), rules, NO_BLOCK).label == "Work"
    assert classify_message(message("hello"), DEFAULT.ruleset, NO_BLOCK).kind == "trash"


def test_decision_invariants():
    with pytest.raises(ValueError):
        Decision("route", "default")
    with pytest.raises(ValueError):
        Decision("trash", "keyword", "Work")
    assert Decision("route", "keyword", "Work", 1, "resume").outcome == "Work"


# attachments

def att(filename: str, text: str | None = None, media_type: str = "application/pdf") -> Attachment:
    return Attachment(filename, media_type, "base64", (text or "x").encode(), text)


@pytest.mark.parametrize("a, subject, expected", [
    (att("john_cv.pdf"), "hello", (True, "Resumes")),
    (att("statement.txt", "Amount due on this bill: 120", "text/plain"), "hello", (True, "Bills")),
    (att("cat.jpg", media_type="image/jpeg"), "hello", (False, None)),
    (att("scan.pdf"), "invoice inv-2022", (True, "Invoices")),
])
def test_attachment_usefulness(a, subject, expected):
    assert tuple(classify_attachment_useful(a, subject, DEFAULT.attachment_rules)) == expected


def test_useful_without_subfolder_goes_to_generic():
    arules = AttachmentRules(useful_keywords=("resume", "offer"), subfolder_map=((("resume",), "Resumes"),))
    assert tuple(classify_attachment_useful(att("offer_letter.pdf"), "", arules)) == (True, None)


def test_eligibility_screening():
    arules = AttachmentRules(eligibility_keywords=("experience",))
    resume = att("r.txt", "Ten years of Experience", "text/plain")
    weak = att("r.txt", "fresh graduate", "text/plain")
    assert screen_eligibility(resume, arules, "Resumes") == "eligible"
    assert screen_eligibility(weak, arules, "Resumes") == "not_eligible"
    assert screen_eligibility(resume, arules, "Bills") == "not_applicable"
    assert screen_eligibility(att("cv.pdf"), AttachmentRules(), "Resumes") == "eligible"


# properties

_filler = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789 ,.!-", min_size=0, max_size=30)


def _case_mix(s: str, flips: list[bool]) -> str:
    return "".join(c.upper() if f else c for c, f in zip(s, flips + [False] * len(s)))


SINGLE_KEYWORD_CASES = dict(
    keyword=st.sampled_from(sorted(KEYWORDS)),
    before=_filler,
    after=_filler,
    flips=st.lists(st.booleans(), max_size=80),
)


@settings(max_examples=1000, deadline=None)
@given(**SINGLE_KEYWORD_CASES)
def test_single_keyword_routes_to_owner(keyword, before, after, flips):
    others = [k for k in KEYWORDS if k != keyword]
    assume(not any(k in f"{before} {after}".lower() for k in KEYWORDS))
    subject = _case_mix(f"{before} {keyword} {after}", flips)
    assume(not any(k in subject.lower().replace(keyword, " ") for k in others))
    d = classify_message(message(subject), DEFAULT.ruleset, NO_BLOCK)
    assert (d.kind, d.label) == ("route", KEYWORDS[keyword])
    # case-insensitivity: every case variant gives the same decision
    assert classify_message(message(subject.swapcase()), DEFAULT.ruleset, NO_BLOCK) == d
    assert classify_message(message(subject.upper()), DEFAULT.ruleset, NO_BLOCK) == d


_rule_st = st.builds(
    lambda label, kws, prio: Rule(label, tuple(kws), frozenset({"subject", "body", "sender"}), prio),
    st.sampled_from(["Work", "Receipt", "Misc", "Travel"]),
    st.lists(st.text(alphabet="abcxyz", min_size=1, max_size=4), min_size=1, max_size=3),
    st.integers(-50, 50),
)


BLOCKLIST_CASES = dict(
    rules=st.lists(_rule_st, max_size=5, unique_by=lambda r: r.priority),
    default=st.sampled_from(["trash", "keep"]),
    subject=st.text(max_size=40),
    body=st.text(max_size=40),
    local=st.text(alphabet="abcxyz.", min_size=1, max_size=10),
    domain_case=st.booleans(),
)


@settings(max_examples=1000, deadline=None)
@given(**BLOCKLIST_CASES)
def test_blocklist_dominates(rules, default, subject, body, local, domain_case):
    sender = f"{local}@Blocked.Example" if domain_case else f"{local}@blocked.example"
    ruleset = RuleSet(tuple(rules), default)
    blocklist = SenderBlocklist.of([f"{local}@blocked.example".upper()])
    d = classify_message(message(subject, sender=sender, body=body), ruleset, blocklist)
    assert (d.kind, d.reason) == ("trash", "blocklist")


@settings(max_examples=300, deadline=None)
@given(subject=st.text(max_size=60), sender=st.emails())
def test_classification_is_deterministic(subject, sender):
    a = classify_message(message(subject, sender=sender), DEFAULT.ruleset, NO_BLOCK)
    b = classify_message(message(subject, sender=sender), DEFAULT.ruleset, NO_BLOCK)
    assert a == b and a.to_dict() == b.to_dict()
