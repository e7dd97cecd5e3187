"""Identities, payload values, canonical encoding, and digests.

Everything stored by confdb is addressed by an :class:`ObjectIdentity`
(class name, optional secondary key, numeric config key) and carries a
:class:`Payload` of one of three kinds:

* ``leaf``     -- named typed fields (the actual settings),
* ``map``      -- named links to other object identities,
* ``runtypes`` -- run-type name to tree-root bindings.

Payloads have exactly one canonical byte encoding, used both for the
content digest and for deduplication: UTF-8 text, LF line endings, a
``kind=<kind>`` first line, then one ``<name>=<value>`` line per entry in
byte-lexicographic name order.  Scalar leaf values are tagged ``i:`` /
``f:`` / ``s:`` / ``x:`` (int, float, string, bytes); homogeneous arrays
use ``<tag>[v1,v2,...]``.  Floats print as shortest lowercase hex-floats
(``0x1.c2p+10``) so the encoding is bit-exact; NaN keeps its raw bit
pattern as ``nan:<16 hex digits>``.  ``decode_payload`` accepts exactly
the image of ``encode_payload`` and nothing else.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

from .errors import InvalidNameError, MalformedIdentityError, MalformedPayloadError

KIND_LEAF = "leaf"
KIND_MAP = "map"
KIND_RUNTYPES = "runtypes"
KINDS = (KIND_LEAF, KIND_MAP, KIND_RUNTYPES)

# `:[]/` keep identity and path text unambiguous; `=` keeps the entry-line
# grammar unambiguous; tab/newline keep the framing unambiguous.
RESERVED_NAME_CHARS = frozenset(":[]/=\t\n")

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

_VALUE_TAGS = "ifsx"


def is_valid_name(name: str) -> bool:
    """True if ``name`` is usable as a class/secondary/link/run-type name."""
    if not isinstance(name, str) or not name:
        return False
    return all(c.isprintable() and c not in RESERVED_NAME_CHARS for c in name)


def validate_name(name: str, what: str = "name") -> str:
    if not is_valid_name(name):
        raise InvalidNameError(f"invalid {what}: {name!r}")
    return name


def _name_key(name: str) -> bytes:
    return name.encode("utf-8")


@dataclass(frozen=True)
class ObjectIdentity:
    """The universal handle: (class name, optional secondary key, config key)."""

    class_name: str
    secondary_key: str | None
    config_key: int

    def __post_init__(self):
        validate_name(self.class_name, "class name")
        if self.secondary_key is not None:
            validate_name(self.secondary_key, "secondary key")
        if isinstance(self.config_key, bool) or not isinstance(self.config_key, int):
            raise MalformedIdentityError(f"config key must be an int: {self.config_key!r}")
        if self.config_key < 1:
            raise MalformedIdentityError(f"config key must be >= 1: {self.config_key}")

    def __str__(self) -> str:
        return format_identity(self)


def format_identity(identity: ObjectIdentity) -> str:
    """Render ``Class:Secondary[Key]``, or ``Class[Key]`` without a secondary."""
    if identity.secondary_key is None:
        return f"{identity.class_name}[{identity.config_key}]"
    return f"{identity.class_name}:{identity.secondary_key}[{identity.config_key}]"


def parse_identity(text: str) -> ObjectIdentity:
    """Inverse of :func:`format_identity`; rejects anything non-canonical."""
    if not isinstance(text, str) or not text.endswith("]"):
        raise MalformedIdentityError(f"missing key brackets: {text!r}")
    open_idx = text.find("[")
    if open_idx < 0 or text.index("]") != len(text) - 1:
        raise MalformedIdentityError(f"missing key brackets: {text!r}")
    key_text = text[open_idx + 1 : -1]
    if not key_text.isdigit() or (len(key_text) > 1 and key_text[0] == "0"):
        raise MalformedIdentityError(f"bad config key: {text!r}")
    key = int(key_text)
    if key < 1:
        raise MalformedIdentityError(f"config key must be >= 1: {text!r}")
    name_part = text[:open_idx]
    if ":" in name_part:
        class_name, sep, secondary = name_part.partition(":")
        if not is_valid_name(class_name) or not is_valid_name(secondary):
            raise MalformedIdentityError(f"bad identity names: {text!r}")
        return ObjectIdentity(class_name, secondary, key)
    if not is_valid_name(name_part):
        raise MalformedIdentityError(f"bad class name: {text!r}")
    return ObjectIdentity(name_part, None, key)


@dataclass(frozen=True)
class Array:
    """Homogeneous, non-empty, non-nested array of leaf scalars.

    ``elem`` is the element tag: ``i`` int, ``f`` float, ``s`` string,
    ``x`` bytes.  Emptiness is rejected because the canonical text for an
    empty array would collide with other encodings.
    """

    elem: str
    items: tuple

    def __post_init__(self):
        if self.elem not in _VALUE_TAGS:
            raise MalformedPayloadError(f"unknown array element tag: {self.elem!r}")
        if not isinstance(self.items, tuple):
            object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise MalformedPayloadError("arrays must be non-empty")
        for item in self.items:
            _check_scalar(self.elem, item)


def _check_scalar(tag: str, value) -> None:
    if tag == "i":
        if isinstance(value, bool) or not isinstance(value, int):
            raise MalformedPayloadError(f"expected int, got {value!r}")
        if not INT64_MIN <= value <= INT64_MAX:
            raise MalformedPayloadError(f"int out of 64-bit range: {value}")
    elif tag == "f":
        if not isinstance(value, float):
            raise MalformedPayloadError(f"expected float, got {value!r}")
    elif tag == "s":
        if not isinstance(value, str):
            raise MalformedPayloadError(f"expected str, got {value!r}")
    elif tag == "x":
        if not isinstance(value, bytes):
            raise MalformedPayloadError(f"expected bytes, got {value!r}")


def _scalar_tag(value) -> str:
    if isinstance(value, bool):
        raise MalformedPayloadError(f"bool is not a leaf value: {value!r}")
    if isinstance(value, int):
        return "i"
    if isinstance(value, float):
        return "f"
    if isinstance(value, str):
        return "s"
    if isinstance(value, bytes):
        return "x"
    raise MalformedPayloadError(f"unsupported leaf value: {value!r}")


@dataclass(frozen=True, eq=False)
class Payload:
    """Immutable payload: kind plus entries sorted by UTF-8 name bytes.

    Equality and hashing go through the canonical encoding, so two
    payloads are equal exactly when their digests are equal (NaN fields
    with identical bit patterns compare equal, +0.0 and -0.0 do not).
    """

    kind: str
    entries: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MalformedPayloadError(f"unknown payload kind: {self.kind!r}")
        items = [(name, value) for name, value in self.entries]
        seen = set()
        for name, value in items:
            validate_name(name, f"{self.kind} entry name")
            if name in seen:
                raise MalformedPayloadError(f"duplicate entry name: {name!r}")
            seen.add(name)
            if self.kind == KIND_LEAF:
                if not isinstance(value, Array):
                    _check_scalar(_scalar_tag(value), value)
            elif not isinstance(value, ObjectIdentity):
                raise MalformedPayloadError(
                    f"{self.kind} entries must link to identities: {value!r}"
                )
        items.sort(key=lambda kv: _name_key(kv[0]))
        object.__setattr__(self, "entries", tuple(items))

    @classmethod
    def leaf(cls, fields) -> "Payload":
        return cls(KIND_LEAF, tuple(_pairs(fields)))

    @classmethod
    def map(cls, links) -> "Payload":
        return cls(KIND_MAP, tuple(_pairs(links)))

    @classmethod
    def runtypes(cls, bindings) -> "Payload":
        return cls(KIND_RUNTYPES, tuple(_pairs(bindings)))

    def names(self) -> tuple:
        return tuple(name for name, _ in self.entries)

    def get(self, name: str):
        for entry_name, value in self.entries:
            if entry_name == name:
                return value
        raise KeyError(name)

    @property
    def fields(self) -> dict:
        assert self.kind == KIND_LEAF
        return dict(self.entries)

    @property
    def links(self) -> dict:
        assert self.kind == KIND_MAP
        return dict(self.entries)

    @property
    def bindings(self) -> dict:
        assert self.kind == KIND_RUNTYPES
        return dict(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Payload):
            return NotImplemented
        return encode_payload(self) == encode_payload(other)

    def __hash__(self) -> int:
        return hash(encode_payload(self))

    def __repr__(self) -> str:
        return f"Payload({self.kind}, {dict(self.entries)!r})"


def _pairs(mapping):
    if hasattr(mapping, "items"):
        return mapping.items()
    return mapping


# ---------------------------------------------------------------------------
# canonical value text


def _format_float(value: float) -> str:
    if math.isnan(value):
        return "nan:" + struct.pack(">d", value).hex()
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    text = value.hex()
    mantissa, _, exponent = text.partition("p")
    if "." in mantissa:
        mantissa = mantissa.rstrip("0").rstrip(".")
    return f"{mantissa}p{exponent}"


def _parse_float(text: str) -> float:
    if text.startswith("nan:"):
        hex_bits = text[4:]
        if len(hex_bits) != 16:
            raise MalformedPayloadError(f"bad NaN bit pattern: {text!r}")
        try:
            raw = bytes.fromhex(hex_bits)
        except ValueError:
            raise MalformedPayloadError(f"bad NaN bit pattern: {text!r}") from None
        return struct.unpack(">d", raw)[0]
    try:
        return float.fromhex(text)
    except (ValueError, OverflowError):
        raise MalformedPayloadError(f"bad float syntax: {text!r}") from None


def _format_string(value: str) -> str:
    out = ['"']
    for c in value:
        if c == '"':
            out.append('\\"')
        elif c == "\\":
            out.append("\\\\")
        elif ord(c) < 0x20:
            out.append(f"\\x{ord(c):02x}")
        else:
            out.append(c)
    out.append('"')
    return "".join(out)


def _parse_string(text: str, start: int) -> tuple[str, int]:
    """Parse a double-quoted string starting at ``text[start]``.

    Returns the decoded value and the index one past the closing quote.
    """
    if start >= len(text) or text[start] != '"':
        raise MalformedPayloadError(f"expected string quote in {text!r}")
    out = []
    i = start + 1
    while i < len(text):
        c = text[i]
        if c == '"':
            return "".join(out), i + 1
        if c == "\\":
            if i + 1 >= len(text):
                break
            esc = text[i + 1]
            if esc == '"' or esc == "\\":
                out.append(esc)
                i += 2
                continue
            hex_part = text[i + 2 : i + 4]
            if esc == "x" and len(hex_part) == 2:
                try:
                    out.append(chr(int(hex_part, 16)))
                    i += 4
                    continue
                except ValueError:
                    pass
            raise MalformedPayloadError(f"bad string escape in {text!r}")
        if ord(c) < 0x20:
            raise MalformedPayloadError("raw control character in string value")
        out.append(c)
        i += 1
    raise MalformedPayloadError(f"unterminated string in {text!r}")


def _format_scalar(tag: str, value) -> str:
    if tag == "i":
        return str(value)
    if tag == "f":
        return _format_float(value)
    if tag == "s":
        return _format_string(value)
    return value.hex()


def _parse_scalar(tag: str, text: str):
    if tag == "i":
        try:
            value = int(text)
        except ValueError:
            raise MalformedPayloadError(f"bad int syntax: {text!r}") from None
        if not INT64_MIN <= value <= INT64_MAX:
            raise MalformedPayloadError(f"int out of 64-bit range: {text!r}")
        return value
    if tag == "f":
        return _parse_float(text)
    if tag == "s":
        value, end = _parse_string(text, 0)
        if end != len(text):
            raise MalformedPayloadError(f"trailing data after string: {text!r}")
        return value
    try:
        return bytes.fromhex(text) if text else b""
    except ValueError:
        raise MalformedPayloadError(f"bad hex bytes: {text!r}") from None


def _split_array_items(tag: str, content: str) -> list[str]:
    if tag != "s":
        return content.split(",")
    # string elements are quoted and may contain commas
    items = []
    in_quote = False
    current = []
    i = 0
    while i < len(content):
        c = content[i]
        if in_quote:
            current.append(c)
            if c == "\\" and i + 1 < len(content):
                current.append(content[i + 1])
                i += 2
                continue
            if c == '"':
                in_quote = False
        elif c == ",":
            items.append("".join(current))
            current = []
        else:
            if c == '"':
                in_quote = True
            current.append(c)
        i += 1
    items.append("".join(current))
    return items


def _format_value(value) -> str:
    if isinstance(value, Array):
        body = ",".join(_format_scalar(value.elem, item) for item in value.items)
        return f"{value.elem}[{body}]"
    tag = _scalar_tag(value)
    return f"{tag}:{_format_scalar(tag, value)}"


def _parse_value(text: str):
    if len(text) < 2 or text[0] not in _VALUE_TAGS:
        raise MalformedPayloadError(f"bad value syntax: {text!r}")
    tag, rest = text[0], text[1:]
    if rest.startswith(":"):
        return _parse_scalar(tag, rest[1:])
    if rest.startswith("[") and rest.endswith("]"):
        items = _split_array_items(tag, rest[1:-1])
        return Array(tag, tuple(_parse_scalar(tag, item) for item in items))
    raise MalformedPayloadError(f"bad value syntax: {text!r}")


# ---------------------------------------------------------------------------
# payload encoding


def encode_payload(payload: Payload) -> bytes:
    """Canonical byte encoding; equal payloads encode to identical bytes."""
    lines = [f"kind={payload.kind}"]
    for name, value in payload.entries:
        if payload.kind == KIND_LEAF:
            lines.append(f"{name}={_format_value(value)}")
        else:
            lines.append(f"{name}={format_identity(value)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def decode_payload(data: bytes) -> Payload:
    """Inverse of :func:`encode_payload`; rejects any non-canonical input."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedPayloadError("payload is not valid UTF-8") from None
    if not text.endswith("\n"):
        raise MalformedPayloadError("payload must end with a newline")
    lines = text[:-1].split("\n")
    head = lines[0]
    if not head.startswith("kind="):
        raise MalformedPayloadError(f"missing kind line: {head!r}")
    kind = head[5:]
    if kind not in KINDS:
        raise MalformedPayloadError(f"unknown payload kind: {kind!r}")

    entries = []
    previous_key = None
    for line in lines[1:]:
        name, sep, value_text = line.partition("=")
        if not sep:
            raise MalformedPayloadError(f"missing '=' in entry line: {line!r}")
        if not is_valid_name(name):
            raise MalformedPayloadError(f"bad entry name: {name!r}")
        key = _name_key(name)
        if previous_key is not None and key <= previous_key:
            reason = "duplicate" if key == previous_key else "unsorted"
            raise MalformedPayloadError(f"{reason} entry name: {name!r}")
        previous_key = key
        if kind == KIND_LEAF:
            entries.append((name, _parse_value(value_text)))
        else:
            try:
                entries.append((name, parse_identity(value_text)))
            except MalformedIdentityError as exc:
                raise MalformedPayloadError(f"bad link target: {value_text!r}") from exc

    payload = Payload(kind, tuple(entries))
    # Canonicality backstop: accept exactly the image of encode_payload.
    if encode_payload(payload) != data:
        raise MalformedPayloadError("payload text is not in canonical form")
    return payload


def payload_digest(payload: Payload) -> bytes:
    """SHA-256 of the canonical encoding; the dedup and integrity key."""
    return hashlib.sha256(encode_payload(payload)).digest()


# ---------------------------------------------------------------------------
# paths

def parse_path(text) -> tuple[str, ...]:
    """Parse ``a/b/c`` into segments; ``""`` and ``"/"`` denote the root."""
    if isinstance(text, tuple):
        for segment in text:
            validate_name(segment, "path segment")
        return text
    if not isinstance(text, str):
        raise InvalidNameError(f"bad path: {text!r}")
    if text in ("", "/"):
        return ()
    segments = text.split("/")
    for segment in segments:
        if not is_valid_name(segment):
            raise InvalidNameError(f"bad path segment {segment!r} in {text!r}")
    return tuple(segments)


def path_text(segments: tuple[str, ...]) -> str:
    """Raw text form of a path; the root is the empty string."""
    return "/".join(segments)


def display_path(segments_or_text) -> str:
    """Human form of a path; the root renders as ``/``."""
    if isinstance(segments_or_text, str):
        return segments_or_text or "/"
    return path_text(segments_or_text) or "/"
