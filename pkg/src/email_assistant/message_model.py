"""Turn raw RFC 5322 / MIME messages into immutable, classifiable records.

Parsing leans on :mod:`email.parser` for header and multipart structure;
transfer decoding, body extraction and text normalization are done here so
that payload bytes are under our control and failures are reported per part.
"""

from __future__ import annotations

import binascii
import html
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from email import policy
from email.header import decode_header, make_header
from email.message import Message
from email.parser import BytesParser
from email.utils import getaddresses, parseaddr, parsedate_to_datetime
from typing import Any

from .errors import CorruptEncoding, MalformedMessage, UnsupportedEncoding

TRANSFER_ENCODINGS = ("base64", "quoted-printable", "7bit", "8bit", "binary")
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

_HEADER_LINE = re.compile(rb"^[!-9;-~]+[ \t]*:")
_BASE64_BODY = re.compile(
    rb"(?:[A-Za-z0-9+/]{4})*(?:[A-Za-z0-9+/]{2}==|[A-Za-z0-9+/]{3}=)?"
)
_WHITESPACE = re.compile(rb"[ \t\r\n]+")
_QP_LINE = re.compile(rb"[^\n]*\n|[^\n]+")
_HEX = {f"{i:02X}".encode(): bytes([i]) for i in range(256)}
_HEX.update({f"{i:02x}".encode(): bytes([i]) for i in range(256)})

_TAG = re.compile(r"<[^<>]*>")
_SCRIPT_STYLE = re.compile(r"<(script|style)\b[^>]*>.*?</\1\s*>", re.IGNORECASE | re.DOTALL)
_BLOCK_TAG = re.compile(r"</?(?:p|div|br|tr|li|h[1-6]|table|ul|ol)\b[^<>]*>", re.IGNORECASE)
_BASIC_ENTITIES = {"&amp;": "&", "&lt;": "<", "&gt;": ">", "&quot;": '"', "&apos;": "'"}
_ENTITY = re.compile("|".join(map(re.escape, _BASIC_ENTITIES)))


@dataclass(frozen=True)
class RawMessage:
    """A message exactly as the store delivered it."""

    data: bytes
    source_handle: Any = None
    received_at: datetime | None = None

    def __post_init__(self) -> None:
        if not self.data:
            raise ValueError("raw message bytes must be non-empty")


@dataclass(frozen=True)
class Attachment:
    filename: str
    media_type: str
    transfer_encoding: str
    decoded_bytes: bytes
    text_content: str | None = None

    @property
    def size(self) -> int:
        return len(self.decoded_bytes)

    @property
    def extension(self) -> str:
        dot = self.filename.rfind(".")
        return self.filename[dot:] if dot > 0 else ""


@dataclass(frozen=True)
class ParsedMessage:
    unique_id: str
    sender: str
    recipients: tuple[str, ...]
    subject: str
    date: datetime
    body_text: str
    attachments: tuple[Attachment, ...] = ()
    raw_size_bytes: int = 0
    sender_name: str = ""
    message_id: str = ""
    warnings: tuple[str, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class NormalizedText:
    text: str

    def __str__(self) -> str:
        return self.text

    def __contains__(self, item: str) -> bool:
        return item in self.text


def assign_unique_id(batch_id: str, batch_seq: int) -> str:
    if batch_seq < 0:
        raise ValueError("batch_seq must be non-negative")
    return f"{batch_id}-{batch_seq:06d}"


def decode_transfer_encoding(encoded: bytes, encoding: str) -> bytes:
    """Reverse a MIME content-transfer-encoding.

    Raises :class:`UnsupportedEncoding` for encodings outside
    :data:`TRANSFER_ENCODINGS` and :class:`CorruptEncoding` when the input
    violates the encoding's alphabet or escape syntax.
    """
    enc = encoding.strip().lower()
    if enc in ("7bit", "8bit", "binary"):
        return bytes(encoded)
    if enc == "base64":
        return _decode_base64(encoded)
    if enc == "quoted-printable":
        return _decode_quoted_printable(encoded)
    raise UnsupportedEncoding(f"unsupported transfer encoding {encoding!r}")


def _decode_base64(encoded: bytes) -> bytes:
    compact = _WHITESPACE.sub(b"", encoded)
    if not _BASE64_BODY.fullmatch(compact):
        raise CorruptEncoding("invalid base64 alphabet or padding")
    try:
        return binascii.a2b_base64(compact)
    except binascii.Error as exc:  # pragma: no cover - regex already rejects these
        raise CorruptEncoding(str(exc)) from exc


def _decode_quoted_printable(encoded: bytes) -> bytes:
    out = bytearray()
    # only LF (optionally preceded by CR) ends a line; a bare CR is data
    for line in _QP_LINE.findall(encoded):
        if line.endswith(b"\r\n"):
            text, ending = line[:-2], b"\r\n"
        elif line.endswith(b"\n"):
            text, ending = line[:-1], b"\n"
        else:
            text, ending = line, b""
        # trailing whitespace is transport padding, never data
        text = text.rstrip(b" \t")
        if text.endswith(b"="):
            text = text[:-1]
            ending = b""
        head, *escapes = text.split(b"=")
        out += head
        for chunk in escapes:
            byte = _HEX.get(chunk[:2])
            if byte is None:
                raise CorruptEncoding(f"malformed quoted-printable escape near {chunk[:8]!r}")
            out += byte
            out += chunk[2:]
        out += ending
    return bytes(out)


def strip_markup(s: str) -> str:
    """Drop HTML tags and decode the five basic entities."""
    s = _SCRIPT_STYLE.sub("", s)
    s = _BLOCK_TAG.sub("\n", s)
    s = _TAG.sub("", s)
    return _ENTITY.sub(lambda m: _BASIC_ENTITIES[m.group(0)], s)


def normalize_text(s: str) -> NormalizedText:
    # Each pass can expose new work (tag removal may join '<' and '>'), so
    # iterate to a fixpoint; that makes the function idempotent by construction.
    prev = None
    while s != prev:
        prev = s
        s = unicodedata.normalize("NFC", s).lower()
        while True:
            stripped = _TAG.sub(" ", s)
            if stripped == s:
                break
            s = stripped
        s = " ".join(s.split())
    return NormalizedText(s)


def _decode_header_value(value: str | None) -> str:
    if value is None:
        return ""
    try:
        return str(make_header(decode_header(value)))
    except (LookupError, ValueError, UnicodeError):
        return str(value)


def _charset_decode(data: bytes, charset: str | None) -> str:
    try:
        return data.decode(charset or "us-ascii", errors="replace")
    except LookupError:
        return data.decode("utf-8", errors="replace")


def _raw_payload(part: Message) -> bytes:
    # get_payload(decode=False) re-decodes 8-bit bodies with the declared
    # charset and loses bytes; the stored payload still carries them as
    # surrogate escapes.
    payload = part._payload
    if isinstance(payload, str):
        return payload.encode("ascii", "surrogateescape")
    if isinstance(payload, bytes):
        return payload
    return b""


def _part_encoding(part: Message) -> str:
    return str(part.get("Content-Transfer-Encoding", "7bit")).strip().lower() or "7bit"


def _is_attachment(part: Message) -> bool:
    disposition = str(part.get("Content-Disposition", "")).split(";")[0].strip().lower()
    return disposition == "attachment" or bool(part.get_filename())


def _leaf_parts(msg: Message):
    """Yield non-multipart parts; attached messages are leaves, not walked."""
    if msg.get_content_type() == "message/rfc822":
        yield msg
    elif msg.is_multipart():
        for sub in msg.get_payload():
            if isinstance(sub, Message):
                yield from _leaf_parts(sub)
    else:
        yield msg


def extract_body_text(msg: Message, warnings: list[str] | None = None) -> str:
    """Return the readable body of a parsed MIME tree.

    All ``text/plain`` parts are concatenated; when a message only carries
    ``text/html``, the markup-stripped HTML is used instead.
    """
    plain: list[str] = []
    markup: list[str] = []
    for part in _leaf_parts(msg):
        if _is_attachment(part):
            continue
        ctype = part.get_content_type()
        if ctype not in ("text/plain", "text/html"):
            continue
        try:
            data = decode_transfer_encoding(_raw_payload(part), _part_encoding(part))
        except (UnsupportedEncoding, CorruptEncoding) as exc:
            if warnings is not None:
                warnings.append(f"body part skipped: {exc}")
            continue
        text = _charset_decode(data, part.get_content_charset())
        (plain if ctype == "text/plain" else markup).append(text)
    if plain:
        return "\n".join(plain).strip()
    return "\n".join(strip_markup(t) for t in markup).strip()


def _build_attachment(part: Message, warnings: list[str]) -> Attachment | None:
    filename = _decode_header_value(part.get_filename()) if part.get_filename() else ""
    media_type = part.get_content_type()
    encoding = _part_encoding(part)
    if media_type == "message/rfc822" and part.is_multipart():
        inner = part.get_payload(0)
        data = inner.as_bytes(policy=policy.compat32)
        encoding = encoding if encoding in TRANSFER_ENCODINGS else "7bit"
    else:
        try:
            data = decode_transfer_encoding(_raw_payload(part), encoding)
        except (UnsupportedEncoding, CorruptEncoding) as exc:
            warnings.append(f"attachment {filename!r} skipped: {exc}")
            return None
    text = None
    if media_type.startswith("text/"):
        text = _charset_decode(data, part.get_content_charset())
    return Attachment(filename, media_type, encoding, data, text)


def _check_framing(data: bytes) -> None:
    if b"\r\n\r\n" not in data and b"\n\n" not in data:
        raise MalformedMessage("no header/body separator")
    first = data.split(b"\n", 1)[0]
    if not _HEADER_LINE.match(first):
        raise MalformedMessage("message does not start with a header field")


def _to_utc(value: datetime) -> datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def message_date(msg: Message, fallback: datetime | None) -> datetime:
    raw = msg.get("Date")
    if raw:
        try:
            return _to_utc(parsedate_to_datetime(str(raw)))
        except (TypeError, ValueError, IndexError):
            pass
    return _to_utc(fallback) if fallback is not None else EPOCH


def parse_message(raw: RawMessage, batch_seq: int, batch_id: str) -> ParsedMessage:
    _check_framing(raw.data)
    msg = BytesParser(policy=policy.compat32).parsebytes(raw.data)

    sender_name, sender = parseaddr(str(msg.get("From", "")))
    if not sender:
        raise MalformedMessage("missing or unparseable From header")
    recipient_fields = [str(v) for v in msg.get_all("To", []) + msg.get_all("Cc", [])]
    recipients = tuple(addr for _, addr in getaddresses(recipient_fields) if addr)

    warnings: list[str] = []
    attachments = []
    for part in _leaf_parts(msg):
        if _is_attachment(part):
            att = _build_attachment(part, warnings)
            if att is not None:
                attachments.append(att)

    return ParsedMessage(
        unique_id=assign_unique_id(batch_id, batch_seq),
        sender=sender,
        recipients=recipients,
        subject=_decode_header_value(msg.get("Subject")),
        date=message_date(msg, raw.received_at),
        body_text=extract_body_text(msg, warnings),
        attachments=tuple(attachments),
        raw_size_bytes=len(raw.data),
        sender_name=_decode_header_value(sender_name) if sender_name else "",
        message_id=str(msg.get("Message-ID", "")).strip().strip("<>"),
        warnings=tuple(warnings),
    )
