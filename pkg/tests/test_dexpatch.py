import hashlib
import random
import struct
import zlib

import pytest
from hypothesis import given, strategies as st

from darkstrip.dexpatch import (
    BadMagic,
    ByteMask,
    InvalidMask,
    MatchCountMismatch,
    MatchPolicy,
    NoMatch,
    OverlappingMatches,
    SizeMismatch,
    apply_byte_mask,
    find_matches,
    parse_dex_header,
    repair_digests,
)
from oracles import adler32_reference, brute_force_matches, sha1_reference


def make_dex(body: bytes = b"") -> bytes:
    """Minimal structurally-valid DEX: 112-byte header plus raw body."""
    total = 112 + len(body)
    header = bytearray(112)
    header[0:8] = b"dex\n035\x00"
    struct.pack_into("<II", header, 32, total, 0x70)
    struct.pack_into("<I", header, 40, 0x12345678)
    return repair_digests(bytes(header) + body)


class TestByteMask:
    def test_parse_round_trips_text(self):
        mask = ByteMask.parse("12 ?? 0F", "AA ?? BB", "expect:1")
        assert mask.pattern == (0x12, None, 0x0F)
        assert mask.replacement == (0xAA, None, 0xBB)
        assert mask.pattern_text() == "12 ?? 0F"
        assert str(mask.policy) == "expect:1"

    def test_all_wildcard_pattern_rejected(self):
        with pytest.raises(InvalidMask):
            ByteMask.parse("?? ??", "00 11")

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidMask):
            ByteMask.parse("00 11", "22")

    def test_bad_tokens_rejected(self):
        with pytest.raises(InvalidMask):
            ByteMask.parse("0G", "00")
        with pytest.raises(InvalidMask):
            ByteMask.parse("123", "00")
        with pytest.raises(InvalidMask):
            ByteMask.parse("00", "11", match="expect:zero")


class TestFindMatches:
    def test_wildcard_pattern_with_overlap_fixture(self):
        data = bytes([0x12, 0x34, 0x0F, 0x12, 0xAA, 0x0F])
        mask = ByteMask.parse("12 ?? 0F", "12 ?? 0F")
        assert find_matches(data, mask) == [0, 3]
        assert brute_force_matches(data, mask.pattern) == [0, 3]

    def test_absent_pattern(self):
        mask = ByteMask.parse("DE AD BE EF", "00 00 00 00")
        assert find_matches(b"\x01\x02\x03\x04" * 8, mask) == []

    def test_overlapping_matches_reported(self):
        mask = ByteMask.parse("AA ??", "AA ??")
        assert find_matches(b"\xaa\xaa\xaa", mask) == [0, 1]

    @given(
        data=st.binary(max_size=512),
        tokens=st.lists(
            st.one_of(st.none(), st.integers(min_value=0, max_value=255)), min_size=1, max_size=8
        ),
    )
    def test_matches_equal_brute_force_oracle(self, data, tokens):
        if all(tok is None for tok in tokens):
            tokens[0] = 0x42
        mask = ByteMask(tuple(tokens), tuple(tokens))
        assert find_matches(data, mask) == brute_force_matches(data, mask.pattern)


class TestApplyByteMask:
    def test_color_literal_replacement_changes_only_match(self):
        blob = bytes(range(64)) + bytes([0xFF, 0x1D, 0xA1, 0xF2]) + bytes(range(64))
        mask = ByteMask.parse("FF 1D A1 F2", "FF 80 80 80")
        patched, count = apply_byte_mask(blob, mask)
        assert count == 1
        diff = [i for i, (a, b) in enumerate(zip(blob, patched)) if a != b]
        assert diff == [65, 66, 67]  # FF keeps its value, three bytes greyed
        assert patched[64:68] == bytes([0xFF, 0x80, 0x80, 0x80])
        assert len(patched) == len(blob)

    def test_expect_exactly_mismatch(self):
        data = b"\x01\x02\x01\x02"
        mask = ByteMask.parse("01 02", "03 04", match="expect:1")
        with pytest.raises(MatchCountMismatch):
            apply_byte_mask(data, mask)

    def test_expect_with_zero_matches_is_no_match(self):
        mask = ByteMask.parse("01 02", "03 04", match="expect:1")
        with pytest.raises(NoMatch):
            apply_byte_mask(b"\xff\xff", mask)

    def test_first_policy_requires_a_match(self):
        mask = ByteMask.parse("01", "02", match="first")
        with pytest.raises(NoMatch):
            apply_byte_mask(b"\xff", mask)

    def test_all_policy_tolerates_zero_matches(self):
        mask = ByteMask.parse("01", "02", match="all")
        patched, count = apply_byte_mask(b"\xff", mask)
        assert (patched, count) == (b"\xff", 0)

    def test_keep_original_replacement_is_identity(self):
        data = b"prefix\x10\x20suffix"
        mask = ByteMask.parse("10 20", "?? ??")
        patched, count = apply_byte_mask(data, mask)
        assert patched == data
        assert count >= 1

    def test_overlapping_windows_rejected(self):
        mask = ByteMask.parse("AA ??", "BB CC")
        with pytest.raises(OverlappingMatches):
            apply_byte_mask(b"\xaa\xaa\xaa", mask)

    def test_first_policy_applies_only_first(self):
        data = b"\x01\x02\x01\x02"
        mask = ByteMask.parse("01 02", "09 09", match="first")
        patched, count = apply_byte_mask(data, mask)
        assert patched == b"\x09\x09\x01\x02"
        assert count == 1

    @given(data=st.binary(min_size=1, max_size=256), seed=st.integers(0, 2**32 - 1))
    def test_equal_length_and_non_interference(self, data, seed):
        rng = random.Random(seed)
        width = rng.randint(1, min(6, len(data)))
        start = rng.randrange(0, len(data) - width + 1)
        pattern = tuple(data[start + i] if rng.random() < 0.7 else None for i in range(width))
        if all(tok is None for tok in pattern):
            pattern = (data[start],) + pattern[1:]
        replacement = tuple(rng.randrange(256) if rng.random() < 0.5 else None for _ in range(width))
        mask = ByteMask(pattern, replacement)
        try:
            patched, _count = apply_byte_mask(data, mask)
        except OverlappingMatches:
            return
        assert len(patched) == len(data)
        windows = set()
        for off in find_matches(data, mask):
            windows.update(range(off, off + width))
        for i, (before, after) in enumerate(zip(data, patched)):
            if i not in windows:
                assert before == after


class TestDexHeader:
    def test_fixture_header_fields(self):
        dex = make_dex(b"fixture body bytes")
        header = parse_dex_header(dex)
        assert header.magic == b"dex\n035\x00"
        assert header.file_size == len(dex)
        assert header.header_size == 0x70

    def test_zip_bytes_rejected(self):
        with pytest.raises(BadMagic):
            parse_dex_header(b"PK\x03\x04" + b"\x00" * 200)

    def test_file_size_mismatch_rejected(self):
        dex = make_dex() + b"trailing garbage"
        with pytest.raises(SizeMismatch):
            parse_dex_header(dex)

    def test_short_input_rejected(self):
        with pytest.raises(SizeMismatch):
            parse_dex_header(b"dex\n035\x00" + b"\x00" * 10)


class TestRepairDigests:
    def test_adler32_of_empty_input_is_one(self):
        assert adler32_reference(b"") == 1
        assert zlib.adler32(b"") == 1

    def test_adler32_wikipedia_reference_value(self):
        assert adler32_reference(b"Wikipedia") == 0x11E60398

    def test_repair_after_body_flip_matches_reference_hashes(self):
        dex = bytearray(make_dex(b"some method bytes: getLatitude\x00"))
        dex[120] ^= 0x5A
        repaired = repair_digests(bytes(dex))
        assert repaired[12:32] == sha1_reference(repaired[32:])
        assert struct.unpack_from("<I", repaired, 8)[0] == adler32_reference(repaired[12:])
        # Library hashes agree with the textbook ones over the same ranges.
        assert repaired[12:32] == hashlib.sha1(repaired[32:]).digest()

    def test_repair_is_idempotent(self):
        dex = make_dex(b"\x00\x01\x02" * 40)
        assert repair_digests(dex) == dex

    def test_repair_rejects_non_dex(self):
        with pytest.raises(BadMagic):
            repair_digests(b"not dex at all" + b"\x00" * 100)
