"""Message codec: turning file bytes into chains of self-addressed messages.

The pipeline for one file is ``encode8 -> slice_encoded -> pack``; the
reverse is ``parse_message`` on each link, joining bodies in chain order,
and a single ``decode8`` on the result.

Encoded text is handled unwrapped (payload alphabet only). Line wrapping at
76 columns is applied by :func:`serialize_message` and removed again by
:func:`parse_message`, so line breaks never count toward the size limit.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import math
import re
from dataclasses import dataclass
from typing import List, Sequence

from .errors import MalformedEncoding, MalformedHeader, NotAnEmfsMessage

SENTINEL = "-1"
LINE_WIDTH = 76
CRLF = "\r\n"

FILENAME_HEADER = "EMFS-Filename"
NEXT_HEADER = "EMFS-Next"

_ID_RE = re.compile(r"^[0-9a-f]{64}$")
_B64_RE = re.compile(r"^[A-Za-z0-9+/]*={0,2}$")
_EOL_RE = re.compile(r"\r?\n")


def is_id_hash(value: str) -> bool:
    return bool(_ID_RE.match(value))


def encode8(data: bytes) -> str:
    """Encode raw bytes as unwrapped base-64 text."""
    return base64.b64encode(bytes(data)).decode("ascii")


def decode8(text: str) -> bytes:
    """Decode base-64 text, ignoring line breaks.

    Raises :class:`MalformedEncoding` for characters outside the base-64
    alphabet or bad padding.
    """
    compact = text.replace("\r", "").replace("\n", "")
    if not _B64_RE.match(compact) or len(compact) % 4:
        raise MalformedEncoding("invalid base-64 text (%d chars)" % len(compact))
    try:
        return base64.b64decode(compact, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MalformedEncoding(str(exc)) from exc


def hash_id(filename: str, slice_index: int, slice_: str) -> str:
    """SHA-256 over ``filename NUL index NUL slice`` as lowercase hex."""
    if slice_index < 0:
        raise ValueError("slice_index must be non-negative")
    h = hashlib.sha256()
    h.update(filename.encode("utf-8"))
    h.update(b"\x00")
    h.update(str(slice_index).encode("ascii"))
    h.update(b"\x00")
    h.update(slice_.encode("ascii"))
    return h.hexdigest()


def chain_length(encoded_size: int, limit_s: int) -> int:
    return max(1, math.ceil(encoded_size / limit_s))


def slice_encoded(text: str, limit_s: int) -> List[str]:
    """Cut encoded text into slices of at most ``limit_s`` characters.

    An empty text still yields one (empty) slice: every file is at least one
    message long.
    """
    if limit_s < 1:
        raise ValueError("limit_s must be >= 1")
    if not text:
        return [""]
    return [text[i:i + limit_s] for i in range(0, len(text), limit_s)]


@dataclass(frozen=True)
class EmfsMessage:
    """One link of a file chain."""

    sender: str
    recipient: str
    first_id: str
    filename: str
    next_id: str
    body: str

    @property
    def subject(self) -> str:
        return "%s %s" % (self.first_id, self.filename)

    @property
    def is_last(self) -> bool:
        return self.next_id == SENTINEL


def pack(filename: str, slices: Sequence[str], self_address: str) -> List[EmfsMessage]:
    """Build the message chain for ``slices``.

    Link ``i`` points at the id of link ``i + 1``; the last link carries the
    end-of-chain sentinel. Every subject starts with the id of link 0.
    """
    if not slices:
        raise ValueError("cannot pack an empty slice list")
    ids = [hash_id(filename, i, s) for i, s in enumerate(slices)]
    last = len(slices) - 1
    messages = []
    for i, body in enumerate(slices):
        next_id = ids[i + 1] if i < last else SENTINEL
        messages.append(EmfsMessage(
            sender=self_address,
            recipient=self_address,
            first_id=ids[0],
            filename=filename,
            next_id=next_id,
            body=body,
        ))
    return messages


def wrap_body(body: str, width: int = LINE_WIDTH) -> str:
    return "".join(body[i:i + width] + CRLF for i in range(0, len(body), width))


def serialize_message(msg: EmfsMessage) -> str:
    """Render the wire form: header block, blank line, wrapped body, CRLF."""
    headers = [
        ("From", msg.sender),
        ("To", msg.recipient),
        ("Subject", msg.subject),
        (FILENAME_HEADER, msg.filename),
        (NEXT_HEADER, msg.next_id),
    ]
    head = "".join("%s: %s%s" % (k, v, CRLF) for k, v in headers)
    return head + CRLF + wrap_body(msg.body)


def header_lines(text: str) -> List[str]:
    # Only CR/LF end lines on the wire; str.splitlines would also split on
    # characters such as U+0085 that may appear in filenames.
    return [line for line in _EOL_RE.split(text) if line]


def split_wire(raw: str):
    """Split wire text into (header lines, body text)."""
    for sep in ("\r\n\r\n", "\n\n"):
        pos = raw.find(sep)
        if pos != -1:
            return header_lines(raw[:pos]), raw[pos + len(sep):]
    if raw.startswith(("\r\n", "\n")):
        return [], raw.lstrip("\r\n")
    return header_lines(raw), ""


def parse_headers(lines: Sequence[str]) -> dict:
    """Unfold and collect headers; names are matched case-insensitively.

    Values are kept verbatim apart from the single space after the colon.
    """
    headers = {}
    name = None
    for line in lines:
        if line[:1] in (" ", "\t") and name is not None:
            headers[name] += line
            continue
        if ":" not in line:
            continue
        key, value = line.split(":", 1)
        if value.startswith(" "):
            value = value[1:]
        name = key.strip().lower()
        headers.setdefault(name, value)
    return headers


def payload_size(body: str) -> int:
    return len(body) - body.count("\r") - body.count("\n")


def parse_message(raw: str) -> EmfsMessage:
    lines, body = split_wire(raw)
    headers = parse_headers(lines)
    filename = headers.get(FILENAME_HEADER.lower())
    next_id = headers.get(NEXT_HEADER.lower())
    if filename is None or next_id is None:
        raise NotAnEmfsMessage("missing %s or %s header" % (FILENAME_HEADER, NEXT_HEADER))
    subject = headers.get("subject", "")
    first_id, _, _rest = subject.partition(" ")
    if not is_id_hash(first_id):
        raise MalformedHeader("subject has no id-hash token: %r" % subject[:80])
    next_id = next_id.strip()
    if next_id != SENTINEL and not is_id_hash(next_id):
        raise MalformedHeader("bad %s value: %r" % (NEXT_HEADER, next_id[:80]))
    return EmfsMessage(
        sender=headers.get("from", ""),
        recipient=headers.get("to", ""),
        first_id=first_id,
        filename=filename,
        next_id=next_id,
        body=body.replace("\r", "").replace("\n", ""),
    )
