"""Wildcard byte-mask patching of DEX bytecode, plus header digest repair.

Byte masks patch compiled code without decompiling it: a pattern of
literal bytes and ``??`` wildcards is matched against the raw file and
an equal-length replacement is written at each match. Replacements never
grow or shrink the file; DEX offset tables make anything else unsafe.

Any edit invalidates the two digests in the DEX header, so
:func:`repair_digests` must run on every modified ``.dex`` entry before
the archive is rebuilt.
"""

from __future__ import annotations

import hashlib
import re
import struct
import zlib
from dataclasses import dataclass

DEX_MAGIC_RE = re.compile(rb"\Adex\n03[5-9]\x00")

# Header layout: magic[8] at 0, checksum u32-LE at 8, signature[20] at 12,
# file_size u32-LE at 32, header_size u32-LE at 36.
CHECKSUM_OFFSET = 8
SIGNATURE_OFFSET = 12
FILE_SIZE_OFFSET = 32
HEADER_SIZE_OFFSET = 36
HEADER_LEN = 112


class DexError(Exception):
    """Base class for DEX handling errors."""


class BadMagic(DexError):
    """Input does not start with a known DEX magic."""


class SizeMismatch(DexError):
    """Header file_size disagrees with the actual byte length."""


class MaskError(Exception):
    """Base class for byte-mask errors."""


class InvalidMask(MaskError):
    """Mask violates its construction rules."""


class NoMatch(MaskError):
    """Pattern not found but the match policy requires one."""


class MatchCountMismatch(MaskError):
    """expect_exactly(n) saw a different number of matches."""


class OverlappingMatches(MaskError):
    """Replacement windows overlap; applying them is ambiguous."""


@dataclass(frozen=True)
class MatchPolicy:
    """How many matches a mask application requires.

    kind is one of "first", "all", or "expect"; count is only meaningful
    for "expect".
    """

    kind: str
    count: int = 0

    @classmethod
    def parse(cls, text: str) -> "MatchPolicy":
        if text == "first":
            return cls("first")
        if text == "all":
            return cls("all")
        if text.startswith("expect:"):
            try:
                n = int(text.split(":", 1)[1])
            except ValueError:
                raise InvalidMask(f"bad match policy {text!r}") from None
            if n < 1:
                raise InvalidMask("expect count must be >= 1")
            return cls("expect", n)
        raise InvalidMask(f"bad match policy {text!r}")

    def __str__(self) -> str:
        return f"expect:{self.count}" if self.kind == "expect" else self.kind


@dataclass(frozen=True)
class ByteMask:
    """Equal-length wildcard pattern and replacement.

    Tokens are ints for literal bytes and None for ``??`` (any byte in
    the pattern, keep-original in the replacement). The pattern must
    contain at least one literal so a mask can never match everywhere.
    """

    pattern: tuple[int | None, ...]
    replacement: tuple[int | None, ...]
    policy: MatchPolicy = MatchPolicy("all")

    def __post_init__(self) -> None:
        if len(self.pattern) != len(self.replacement):
            raise InvalidMask("pattern and replacement must be the same length")
        if not self.pattern:
            raise InvalidMask("empty pattern")
        if all(tok is None for tok in self.pattern):
            raise InvalidMask("pattern needs at least one literal byte")
        for tok in (*self.pattern, *self.replacement):
            if tok is not None and not 0 <= tok <= 0xFF:
                raise InvalidMask(f"byte out of range: {tok}")

    @classmethod
    def parse(cls, pattern: str, replacement: str, match: str = "all") -> "ByteMask":
        """Build a mask from whitespace-separated hex tokens.

        Two hex digits per literal, ``??`` for a wildcard. The textual
        form is what patch files carry, chosen to be easy to audit by
        hand.
        """
        return cls(_parse_tokens(pattern), _parse_tokens(replacement), MatchPolicy.parse(match))

    def pattern_text(self) -> str:
        return _format_tokens(self.pattern)

    def replacement_text(self) -> str:
        return _format_tokens(self.replacement)


def _parse_tokens(text: str) -> tuple[int | None, ...]:
    tokens: list[int | None] = []
    for piece in text.split():
        if piece == "??":
            tokens.append(None)
        elif len(piece) == 2:
            try:
                tokens.append(int(piece, 16))
            except ValueError:
                raise InvalidMask(f"bad hex token {piece!r}") from None
        else:
            raise InvalidMask(f"bad token {piece!r}: want two hex digits or '??'")
    return tuple(tokens)


def _format_tokens(tokens: tuple[int | None, ...]) -> str:
    return " ".join("??" if tok is None else f"{tok:02X}" for tok in tokens)


def find_matches(data: bytes, mask: ByteMask) -> list[int]:
    """All offsets where the pattern matches; overlapping hits included."""
    parts = [b"." if tok is None else re.escape(bytes([tok])) for tok in mask.pattern]
    finder = re.compile(b"(?=" + b"".join(parts) + b")", re.DOTALL)
    return [m.start() for m in finder.finditer(data)]


def apply_byte_mask(data: bytes, mask: ByteMask) -> tuple[bytes, int]:
    """Write the replacement at matched offsets per the mask's policy.

    Returns the patched bytes (always the same length as the input) and
    the number of matches written.
    """
    matches = find_matches(data, mask)
    policy = mask.policy
    if not matches:
        if policy.kind in ("first", "expect"):
            raise NoMatch(f"pattern {mask.pattern_text()!r} not found")
        return data, 0
    if policy.kind == "first":
        targets = matches[:1]
    elif policy.kind == "expect":
        if len(matches) != policy.count:
            raise MatchCountMismatch(f"expected exactly {policy.count} matches, found {len(matches)}")
        targets = matches
    else:
        targets = matches
    width = len(mask.pattern)
    for prev, cur in zip(targets, targets[1:]):
        if cur < prev + width:
            raise OverlappingMatches(f"matches at {prev} and {cur} overlap for width {width}")
    out = bytearray(data)
    for offset in targets:
        for i, tok in enumerate(mask.replacement):
            if tok is not None:
                out[offset + i] = tok
    return bytes(out), len(targets)


@dataclass(frozen=True)
class DexHeader:
    magic: bytes
    checksum: int
    signature: bytes
    file_size: int
    header_size: int


def parse_dex_header(data: bytes) -> DexHeader:
    """Read the fixed-offset header fields, validating magic and size."""
    if not DEX_MAGIC_RE.match(data):
        raise BadMagic(f"not a DEX file: {data[:8]!r}")
    if len(data) < HEADER_LEN:
        raise SizeMismatch(f"{len(data)} bytes is shorter than a DEX header")
    checksum = struct.unpack_from("<I", data, CHECKSUM_OFFSET)[0]
    signature = data[SIGNATURE_OFFSET : SIGNATURE_OFFSET + 20]
    file_size, header_size = struct.unpack_from("<II", data, FILE_SIZE_OFFSET)
    if file_size != len(data):
        raise SizeMismatch(f"header claims {file_size} bytes, file has {len(data)}")
    return DexHeader(data[:8], checksum, signature, file_size, header_size)


def repair_digests(data: bytes) -> bytes:
    """Recompute the header digests after an edit.

    SHA-1 covers bytes [32, EOF) and is written first; Adler-32 then
    covers bytes [12, EOF), which includes the fresh signature. Doing it
    in the other order bakes a stale signature into the checksum.
    """
    if not DEX_MAGIC_RE.match(data):
        raise BadMagic(f"not a DEX file: {data[:8]!r}")
    out = bytearray(data)
    out[SIGNATURE_OFFSET : SIGNATURE_OFFSET + 20] = hashlib.sha1(out[FILE_SIZE_OFFSET:]).digest()
    struct.pack_into("<I", out, CHECKSUM_OFFSET, zlib.adler32(bytes(out[SIGNATURE_OFFSET:])) & 0xFFFFFFFF)
    return bytes(out)
