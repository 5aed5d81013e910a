"""Byte-exact reading and writing of the APK's ZIP container.

Supports the subset of ZIP that APKs actually use: local headers,
a central directory, one end-of-central-directory record, and methods
0 (stored) and 8 (deflated). Stored entries can be 4-byte aligned on
write via zero padding in the local-header extra field, the same trick
zipalign uses. ZIP64, encryption, multi-disk archives, and streaming
data descriptors are rejected.

Untouched entries keep their original compressed bytes and are re-emitted
verbatim, so writing an unmodified archive reproduces it bit for bit.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

LOCAL_HEADER_SIG = b"PK\x03\x04"
CENTRAL_DIR_SIG = b"PK\x01\x02"
EOCD_SIG = b"PK\x05\x06"
ZIP64_EOCD_SIG = b"PK\x06\x06"
ZIP64_LOCATOR_SIG = b"PK\x06\x07"

STORED = 0
DEFLATED = 8

# Fixed DOS timestamp (1981-01-01 00:00:00) stamped onto new and replaced
# entries; keeps archive output reproducible.
FIXED_DOS_TIME = 0x0000
FIXED_DOS_DATE = 0x0221

_DEFLATE_LEVEL = 9
_EOCD_LEN = 22
_LOCAL_LEN = 30
_CENTRAL_LEN = 46


class ZipError(Exception):
    """Base class for container errors."""


class MissingEocd(ZipError):
    """No end-of-central-directory record found."""


class LocalHeaderMismatch(ZipError):
    """Local file header contradicts the central directory."""


class CrcMismatch(ZipError):
    """Stored CRC-32 does not match the entry data (corrupt input)."""


class EntryNotFound(ZipError):
    """Named entry is not in the archive."""


class DuplicateName(ZipError):
    """Entry name already present in the archive."""


class Zip64Unsupported(ZipError):
    """Archive uses ZIP64 structures, which are out of scope."""


class UnsupportedZipFeature(ZipError):
    """Encryption, data descriptors, or other unsupported ZIP features."""


@dataclass
class ZipEntry:
    """One archive member, held with its data in uncompressed form.

    ``original_compressed`` carries the raw stream read from the source
    archive; it is invalidated whenever the entry data changes so the
    writer knows to recompress.
    """

    name: str
    method: int
    data: bytes
    crc32: int
    dos_time: int = FIXED_DOS_TIME
    dos_date: int = FIXED_DOS_DATE
    flags: int = 0
    original_compressed: bytes | None = None
    local_extra: bytes = b""


@dataclass
class ApkArchive:
    """Ordered ZIP entry list plus the trailing archive comment."""

    entries: list[ZipEntry] = field(default_factory=list)
    trailing_comment: bytes = b""

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def has_entry(self, name: str) -> bool:
        return any(e.name == name for e in self.entries)

    def _find(self, name: str) -> ZipEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise EntryNotFound(name)

    def read_entry(self, name: str) -> bytes:
        """Return the uncompressed bytes of the named entry."""
        return self._find(name).data

    def add_entry(self, name: str, data: bytes, method: int = DEFLATED) -> None:
        """Append a new entry; it lands last in the central directory."""
        if self.has_entry(name):
            raise DuplicateName(name)
        if method not in (STORED, DEFLATED):
            raise UnsupportedZipFeature(f"compression method {method}")
        self.entries.append(
            ZipEntry(name=name, method=method, data=bytes(data), crc32=zlib.crc32(data) & 0xFFFFFFFF)
        )

    def replace_entry(self, name: str, data: bytes) -> None:
        """Swap the entry's data; the original compressed form is dropped."""
        entry = self._find(name)
        entry.data = bytes(data)
        entry.crc32 = zlib.crc32(data) & 0xFFFFFFFF
        entry.original_compressed = None
        entry.local_extra = b""
        entry.dos_time = FIXED_DOS_TIME
        entry.dos_date = FIXED_DOS_DATE

    def remove_entry(self, name: str) -> None:
        self.entries.remove(self._find(name))


def open_archive(data: bytes) -> ApkArchive:
    """Parse ZIP bytes into an :class:`ApkArchive`.

    Every central-directory entry is materialized and its CRC validated
    against the decompressed data, so corrupt input fails here rather
    than at patch time.
    """
    eocd_at = _find_eocd(data)
    (disk_no, cd_disk, n_disk, n_total, cd_size, cd_offset, comment_len) = struct.unpack_from(
        "<HHHHIIH", data, eocd_at + 4
    )
    if disk_no != 0 or cd_disk != 0 or n_disk != n_total:
        raise UnsupportedZipFeature("multi-disk archive")
    if 0xFFFF in (n_disk, n_total) or 0xFFFFFFFF in (cd_size, cd_offset):
        raise Zip64Unsupported("ZIP64 end-of-central-directory markers")
    if data.rfind(ZIP64_LOCATOR_SIG, 0, eocd_at) != -1 or data.rfind(ZIP64_EOCD_SIG, 0, eocd_at) != -1:
        raise Zip64Unsupported("ZIP64 record present")
    trailing_comment = data[eocd_at + _EOCD_LEN : eocd_at + _EOCD_LEN + comment_len]

    archive = ApkArchive(trailing_comment=trailing_comment)
    seen: set[str] = set()
    pos = cd_offset
    for _ in range(n_total):
        if data[pos : pos + 4] != CENTRAL_DIR_SIG:
            raise LocalHeaderMismatch(f"bad central directory signature at {pos}")
        (
            _ver_made,
            _ver_need,
            flags,
            method,
            dos_time,
            dos_date,
            crc,
            csize,
            usize,
            name_len,
            extra_len,
            comment_len,
            _disk_start,
            _int_attrs,
            _ext_attrs,
            header_offset,
        ) = struct.unpack_from("<HHHHHHIIIHHHHHII", data, pos + 4)
        name_bytes = data[pos + _CENTRAL_LEN : pos + _CENTRAL_LEN + name_len]
        pos += _CENTRAL_LEN + name_len + extra_len + comment_len
        name = _decode_name(name_bytes, flags)
        if name in seen:
            raise DuplicateName(name)
        seen.add(name)
        entry = _read_local(data, header_offset, name, flags, method, crc, csize, usize)
        entry.dos_time = dos_time
        entry.dos_date = dos_date
        archive.entries.append(entry)
    return archive


def write_archive(archive: ApkArchive, align: int = 1) -> bytes:
    """Serialize the archive; ``align`` pads stored entries' data offsets.

    Untouched entries are re-emitted from their original compressed
    stream; replaced or added deflated entries are compressed at a fixed
    level. The output re-opens to an equal archive.
    """
    if align not in (1, 4):
        raise ValueError("align must be 1 or 4")
    out = bytearray()
    central = bytearray()
    for entry in archive.entries:
        name_bytes = _encode_name(entry.name, entry.flags)
        raw = _compressed_stream(entry)
        extra = entry.local_extra
        if align > 1 and entry.method == STORED:
            base = len(out) + _LOCAL_LEN + len(name_bytes)
            if (base + len(extra)) % align != 0:
                extra = b"\x00" * ((align - base % align) % align)
        header_offset = len(out)
        common = struct.pack(
            "<HHHHIII",
            entry.flags,
            entry.method,
            entry.dos_time,
            entry.dos_date,
            entry.crc32,
            len(raw),
            len(entry.data),
        )
        version_needed = 20 if entry.method == DEFLATED else 10
        out += LOCAL_HEADER_SIG
        out += struct.pack("<H", version_needed)
        out += common
        out += struct.pack("<HH", len(name_bytes), len(extra))
        out += name_bytes
        out += extra
        out += raw
        central += CENTRAL_DIR_SIG
        central += struct.pack("<HH", 20, version_needed)
        central += common
        central += struct.pack("<HHHHHII", len(name_bytes), 0, 0, 0, 0, 0, header_offset)
        central += name_bytes
    cd_offset = len(out)
    out += central
    out += EOCD_SIG
    out += struct.pack(
        "<HHHHIIH",
        0,
        0,
        len(archive.entries),
        len(archive.entries),
        len(central),
        cd_offset,
        len(archive.trailing_comment),
    )
    out += archive.trailing_comment
    return bytes(out)


def _find_eocd(data: bytes) -> int:
    if len(data) < _EOCD_LEN:
        raise MissingEocd("input shorter than an end-of-central-directory record")
    # The comment makes the EOCD position variable; scan backwards and
    # accept the candidate whose comment length reaches exactly to EOF.
    floor = max(0, len(data) - _EOCD_LEN - 0xFFFF)
    pos = len(data) - _EOCD_LEN
    while pos >= floor:
        found = data.rfind(EOCD_SIG, floor, pos + 4)
        if found == -1:
            break
        comment_len = struct.unpack_from("<H", data, found + 20)[0]
        if found + _EOCD_LEN + comment_len == len(data):
            return found
        pos = found - 1
    raise MissingEocd("no end-of-central-directory record")


def _decode_name(raw: bytes, flags: int) -> str:
    return raw.decode("utf-8") if flags & 0x800 else raw.decode("cp437")


def _encode_name(name: str, flags: int) -> bytes:
    return name.encode("utf-8") if flags & 0x800 else name.encode("cp437")


def _read_local(
    data: bytes, offset: int, name: str, flags: int, method: int, crc: int, csize: int, usize: int
) -> ZipEntry:
    if data[offset : offset + 4] != LOCAL_HEADER_SIG:
        raise LocalHeaderMismatch(f"no local header for {name!r} at {offset}")
    (_ver, local_flags, local_method, _t, _d, _crc, _csize, _usize, name_len, extra_len) = struct.unpack_from(
        "<HHHHHIIIHH", data, offset + 4
    )
    if local_flags & 0x0001:
        raise UnsupportedZipFeature(f"{name!r} is encrypted")
    if local_flags & 0x0008:
        raise UnsupportedZipFeature(f"{name!r} uses a streaming data descriptor")
    local_name = _decode_name(data[offset + _LOCAL_LEN : offset + _LOCAL_LEN + name_len], local_flags)
    if local_name != name:
        raise LocalHeaderMismatch(f"central directory says {name!r}, local header says {local_name!r}")
    if local_method != method:
        raise LocalHeaderMismatch(f"method mismatch for {name!r}")
    extra_start = offset + _LOCAL_LEN + name_len
    local_extra = data[extra_start : extra_start + extra_len]
    data_start = extra_start + extra_len
    raw = data[data_start : data_start + csize]
    if len(raw) != csize:
        raise LocalHeaderMismatch(f"{name!r} data truncated")
    if method == STORED:
        if csize != usize:
            raise LocalHeaderMismatch(f"stored entry {name!r} has differing sizes")
        payload = raw
    elif method == DEFLATED:
        try:
            payload = zlib.decompress(raw, wbits=-15)
        except zlib.error as exc:
            raise CrcMismatch(f"{name!r}: corrupt deflate stream: {exc}") from exc
        if len(payload) != usize:
            raise LocalHeaderMismatch(f"{name!r} inflates to {len(payload)} bytes, expected {usize}")
    else:
        raise UnsupportedZipFeature(f"{name!r} uses compression method {method}")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CrcMismatch(f"{name!r}: CRC-32 check failed")
    return ZipEntry(
        name=name,
        method=method,
        data=payload,
        crc32=crc,
        flags=local_flags,
        original_compressed=raw,
        local_extra=local_extra,
    )


def _compressed_stream(entry: ZipEntry) -> bytes:
    if entry.original_compressed is not None:
        return entry.original_compressed
    if entry.method == STORED:
        return entry.data
    compressor = zlib.compressobj(_DEFLATE_LEVEL, zlib.DEFLATED, -15)
    return compressor.compress(entry.data) + compressor.flush()
