"""User-generated signing identity and v1 (JAR-style) APK signing.

Patched apps must be re-signed before Android will install them, and the
certificate has to be the user's own: a unique, self-signed identity
prevents anyone else from shipping updates under the same signature.

Signing covers every content entry via META-INF/MANIFEST.MF (SHA-256
digests), META-INF/CERT.SF (digests of the manifest and of each manifest
section), and META-INF/CERT.RSA (a minimal PKCS#7 SignedData holding an
RSA signature over CERT.SF plus the certificate). Verification walks the
same chain in reverse and is tamper-evident down to single-byte edits.

Identity generation accepts an optional seed that makes the key pair and
certificate fully deterministic; that exists for reproducible tests, not
for production keys.
"""

from __future__ import annotations

import datetime
import hashlib
import math
import re
import struct
from base64 import b64encode
from dataclasses import dataclass

from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.x509.oid import NameOID

from .zipkit import ApkArchive, DEFLATED, EntryNotFound

MANIFEST_NAME = "META-INF/MANIFEST.MF"
SIGNATURE_FILE_NAME = "META-INF/CERT.SF"
SIGNATURE_BLOCK_NAME = "META-INF/CERT.RSA"

_CREATED_BY = "darkstrip 0.1.0"
_LINE_LIMIT = 70  # bytes per manifest line, excluding CRLF
_RSA_BITS = 2048
_PUBLIC_EXPONENT = 65537
_VALIDITY_YEARS = 25

_META_RE = re.compile(r"\AMETA-INF/((?s:.)*\.(SF|RSA|DSA|EC)|MANIFEST\.MF)\Z")


class SignerError(Exception):
    """Signing preconditions violated or identity files unusable."""


@dataclass(frozen=True)
class VerifyResult:
    verified: bool
    fingerprint: str | None = None
    reason: str | None = None


@dataclass
class SigningIdentity:
    """RSA-2048 key pair plus its self-signed certificate."""

    private_key: rsa.RSAPrivateKey
    certificate: x509.Certificate

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.certificate.public_bytes(serialization.Encoding.DER)).hexdigest()

    def to_pem(self) -> bytes:
        key = self.private_key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        return key + self.certificate.public_bytes(serialization.Encoding.PEM)

    @classmethod
    def from_pem(cls, blob: bytes) -> "SigningIdentity":
        try:
            key = serialization.load_pem_private_key(blob, password=None)
            cert_start = blob.index(b"-----BEGIN CERTIFICATE-----")
            cert = x509.load_pem_x509_certificate(blob[cert_start:])
        except (ValueError, TypeError) as exc:
            raise SignerError(f"cannot load identity: {exc}") from exc
        if cert.public_key().public_numbers() != key.public_key().public_numbers():
            raise SignerError("certificate does not match the private key")
        return cls(private_key=key, certificate=cert)


def generate_identity(subject_name: str, rng_seed: bytes | None = None) -> SigningIdentity:
    """Create a fresh self-signed identity.

    With a seed the key pair, serial number, and validity window are all
    derived deterministically, so repeated calls produce byte-identical
    certificates.
    """
    if rng_seed is None:
        key = rsa.generate_private_key(public_exponent=_PUBLIC_EXPONENT, key_size=_RSA_BITS)
        serial = x509.random_serial_number()
        not_before = datetime.datetime.now(datetime.timezone.utc) - datetime.timedelta(days=1)
    else:
        stream = _SeededStream(rng_seed)
        key = _deterministic_rsa_key(stream)
        serial = int.from_bytes(stream.read(8), "big") | 1
        not_before = datetime.datetime(2021, 1, 1, tzinfo=datetime.timezone.utc)
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, subject_name)])
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(serial)
        .not_valid_before(not_before)
        .not_valid_after(not_before + datetime.timedelta(days=365 * _VALIDITY_YEARS))
        .sign(key, hashes.SHA256())
    )
    return SigningIdentity(private_key=key, certificate=cert)


class _SeededStream:
    """SHA-256 counter stream: deterministic bytes from a seed."""

    def __init__(self, seed: bytes):
        self._state = hashlib.sha256(b"darkstrip-identity:" + seed).digest()
        self._counter = 0
        self._buffer = b""

    def read(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(self._state + struct.pack(">Q", self._counter)).digest()
            self._buffer += block
            self._counter += 1
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def randint_below(self, bound: int) -> int:
        width = (bound.bit_length() + 7) // 8
        while True:
            value = int.from_bytes(self.read(width), "big")
            if value < bound:
                return value


_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(math.isqrt(p)) + 1))]


def _is_probable_prime(n: int, stream: _SeededStream, rounds: int = 40) -> bool:
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = 2 + stream.randint_below(n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _deterministic_prime(stream: _SeededStream, bits: int) -> int:
    while True:
        candidate = int.from_bytes(stream.read(bits // 8), "big")
        candidate |= (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        candidate &= (1 << bits) - 1
        if candidate % _PUBLIC_EXPONENT == 1:
            continue
        if _is_probable_prime(candidate, stream):
            return candidate


def _deterministic_rsa_key(stream: _SeededStream) -> rsa.RSAPrivateKey:
    half = _RSA_BITS // 2
    while True:
        p = _deterministic_prime(stream, half)
        q = _deterministic_prime(stream, half)
        if p == q:
            continue
        if math.gcd(_PUBLIC_EXPONENT, (p - 1) * (q - 1)) != 1:
            continue
        break
    if p < q:
        p, q = q, p
    n = p * q
    d = pow(_PUBLIC_EXPONENT, -1, (p - 1) * (q - 1))
    public = rsa.RSAPublicNumbers(_PUBLIC_EXPONENT, n)
    private = rsa.RSAPrivateNumbers(
        p=p,
        q=q,
        d=d,
        dmp1=rsa.rsa_crt_dmp1(d, p),
        dmq1=rsa.rsa_crt_dmq1(d, q),
        iqmp=rsa.rsa_crt_iqmp(p, q),
        public_numbers=public,
    )
    return private.private_key()


# ---------------------------------------------------------------------------
# manifest text format


def is_signature_entry(name: str) -> bool:
    """Signature files are excluded from their own digest coverage."""
    return bool(_META_RE.fullmatch(name))


def _wrap_line(logical_line: bytes) -> bytes:
    """Split a logical header line at the 70-byte limit, CRLF endings.

    Continuation lines start with one space and hold at most 69 content
    bytes, keeping every physical line within the limit.
    """
    out = bytearray()
    head, rest = logical_line[:_LINE_LIMIT], logical_line[_LINE_LIMIT:]
    out += head + b"\r\n"
    while rest:
        chunk, rest = rest[: _LINE_LIMIT - 1], rest[_LINE_LIMIT - 1 :]
        out += b" " + chunk + b"\r\n"
    return bytes(out)


def _digest_b64(data: bytes) -> bytes:
    return b64encode(hashlib.sha256(data).digest())


def _entry_section(name: str, payload_digest: bytes) -> bytes:
    section = _wrap_line(b"Name: " + name.encode("utf-8"))
    section += _wrap_line(b"SHA-256-Digest: " + payload_digest)
    return section + b"\r\n"


def build_manifest(archive: ApkArchive) -> bytes:
    main = _wrap_line(b"Manifest-Version: 1.0") + _wrap_line(b"Created-By: " + _CREATED_BY.encode()) + b"\r\n"
    sections = b"".join(
        _entry_section(entry.name, _digest_b64(entry.data))
        for entry in archive.entries
        if not is_signature_entry(entry.name)
    )
    return main + sections


def build_signature_file(manifest: bytes) -> bytes:
    main_end = manifest.index(b"\r\n\r\n") + 4
    out = _wrap_line(b"Signature-Version: 1.0")
    out += _wrap_line(b"Created-By: " + _CREATED_BY.encode())
    out += _wrap_line(b"SHA-256-Digest-Manifest: " + _digest_b64(manifest))
    out += _wrap_line(b"SHA-256-Digest-Manifest-Main-Attributes: " + _digest_b64(manifest[:main_end]))
    out += b"\r\n"
    for name, section in _manifest_sections(manifest):
        out += _entry_section(name, _digest_b64(section))
    return out


def _unwrap_lines(blob: bytes) -> list[bytes]:
    lines: list[bytes] = []
    for raw in blob.split(b"\r\n"):
        if raw.startswith(b" ") and lines:
            lines[-1] += raw[1:]
        else:
            lines.append(raw)
    return lines


def _manifest_sections(manifest: bytes) -> list[tuple[str, bytes]]:
    """(entry name, exact section bytes) pairs, skipping the main section."""
    sections: list[tuple[str, bytes]] = []
    boundary = manifest.index(b"\r\n\r\n") + 4
    pos = boundary
    while pos < len(manifest):
        end = manifest.index(b"\r\n\r\n", pos) + 4
        section = manifest[pos:end]
        for line in _unwrap_lines(section):
            if line.startswith(b"Name: "):
                sections.append((line[6:].decode("utf-8"), section))
                break
        pos = end
    return sections


def _section_digests(blob: bytes) -> dict[str, bytes]:
    digests: dict[str, bytes] = {}
    for name, section in _manifest_sections(blob):
        for line in _unwrap_lines(section):
            if line.startswith(b"SHA-256-Digest: "):
                digests[name] = line[len(b"SHA-256-Digest: ") :]
    return digests


def _main_attribute(blob: bytes, key: bytes) -> bytes | None:
    main_end = blob.index(b"\r\n\r\n") + 2
    for line in _unwrap_lines(blob[:main_end]):
        if line.startswith(key + b": "):
            return line[len(key) + 2 :]
    return None


# ---------------------------------------------------------------------------
# minimal DER / PKCS#7


_OID_SIGNED_DATA = "1.2.840.113549.1.7.2"
_OID_DATA = "1.2.840.113549.1.7.1"
_OID_SHA256 = "2.16.840.1.101.3.4.2.1"
_OID_RSA = "1.2.840.113549.1.1.1"


def _der(tag: int, content: bytes) -> bytes:
    if len(content) < 0x80:
        return bytes([tag, len(content)]) + content
    length = len(content).to_bytes((len(content).bit_length() + 7) // 8, "big")
    return bytes([tag, 0x80 | len(length)]) + length + content


def _der_oid(dotted: str) -> bytes:
    parts = [int(p) for p in dotted.split(".")]
    body = bytearray([parts[0] * 40 + parts[1]])
    for part in parts[2:]:
        chunk = bytearray([part & 0x7F])
        part >>= 7
        while part:
            chunk.insert(0, 0x80 | (part & 0x7F))
            part >>= 7
        body += chunk
    return _der(0x06, bytes(body))


def _der_int(value: int) -> bytes:
    raw = value.to_bytes(max(1, (value.bit_length() + 8) // 8), "big")
    return _der(0x02, raw)


def _alg_id(oid: str) -> bytes:
    return _der(0x30, _der_oid(oid) + b"\x05\x00")


def build_signature_block(identity: SigningIdentity, sf_content: bytes) -> bytes:
    """Detached PKCS#7 SignedData: RSA PKCS#1 v1.5 over the .SF bytes."""
    signature = identity.private_key.sign(sf_content, padding.PKCS1v15(), hashes.SHA256())
    cert_der = identity.certificate.public_bytes(serialization.Encoding.DER)
    issuer_der = identity.certificate.issuer.public_bytes()
    signer_info = _der(
        0x30,
        _der_int(1)
        + _der(0x30, issuer_der + _der_int(identity.certificate.serial_number))
        + _alg_id(_OID_SHA256)
        + _alg_id(_OID_RSA)
        + _der(0x04, signature),
    )
    signed_data = _der(
        0x30,
        _der_int(1)
        + _der(0x31, _alg_id(_OID_SHA256))
        + _der(0x30, _der_oid(_OID_DATA))
        + _der(0xA0, cert_der)
        + _der(0x31, signer_info),
    )
    return _der(0x30, _der_oid(_OID_SIGNED_DATA) + _der(0xA0, signed_data))


def _der_read(data: bytes, pos: int) -> tuple[int, bytes, bytes, int]:
    """One TLV: (tag, content, raw tag+len+content, position after)."""
    if pos + 2 > len(data):
        raise SignerError("truncated DER structure")
    tag = data[pos]
    first = data[pos + 1]
    if first < 0x80:
        length, header = first, 2
    else:
        n = first & 0x7F
        if pos + 2 + n > len(data):
            raise SignerError("truncated DER length")
        length = int.from_bytes(data[pos + 2 : pos + 2 + n], "big")
        header = 2 + n
    end = pos + header + length
    if end > len(data):
        raise SignerError("DER content runs past the input")
    return tag, data[pos + header : end], data[pos:end], end


def _der_children(content: bytes) -> list[tuple[int, bytes, bytes]]:
    out = []
    pos = 0
    while pos < len(content):
        tag, inner, raw, pos = _der_read(content, pos)
        out.append((tag, inner, raw))
    return out


def parse_signature_block(blob: bytes) -> tuple[x509.Certificate, bytes]:
    """Extract the certificate and raw RSA signature from CERT.RSA."""
    tag, content, _, _ = _der_read(blob, 0)
    if tag != 0x30:
        raise SignerError("signature block is not a SEQUENCE")
    children = _der_children(content)
    if len(children) < 2 or children[1][0] != 0xA0:
        raise SignerError("signature block has no SignedData payload")
    signed_data = _der_children(children[1][1])
    if not signed_data or signed_data[0][0] != 0x30:
        raise SignerError("malformed SignedData")
    fields = _der_children(signed_data[0][1])
    cert_raw = None
    signer_infos = None
    for tag, inner, raw in fields[3:]:
        if tag == 0xA0 and cert_raw is None:
            cert_children = _der_children(inner)
            if not cert_children:
                raise SignerError("empty certificate set")
            cert_raw = cert_children[0][2]
        elif tag == 0x31:
            signer_infos = inner
    if cert_raw is None or signer_infos is None:
        raise SignerError("SignedData missing certificate or signer info")
    info_children = _der_children(signer_infos)
    signer = _der_children(info_children[0][1])
    octets = [inner for tag, inner, _ in signer if tag == 0x04]
    if not octets:
        raise SignerError("signer info carries no signature")
    return x509.load_der_x509_certificate(cert_raw), octets[-1]


# ---------------------------------------------------------------------------
# signing and verification


def sign_apk(archive: ApkArchive, identity: SigningIdentity) -> ApkArchive:
    """Append MANIFEST.MF, CERT.SF, and CERT.RSA to the archive."""
    for entry in archive.entries:
        if is_signature_entry(entry.name):
            raise SignerError(f"archive already carries signature entry {entry.name!r}")
    manifest = build_manifest(archive)
    sf = build_signature_file(manifest)
    block = build_signature_block(identity, sf)
    archive.add_entry(MANIFEST_NAME, manifest, method=DEFLATED)
    archive.add_entry(SIGNATURE_FILE_NAME, sf, method=DEFLATED)
    archive.add_entry(SIGNATURE_BLOCK_NAME, block, method=DEFLATED)
    return archive


def verify_apk(archive: ApkArchive, expected_fingerprint: str | None = None) -> VerifyResult:
    """Check digests, the signature chain, and optionally the signer."""
    try:
        manifest = archive.read_entry(MANIFEST_NAME)
        sf = archive.read_entry(SIGNATURE_FILE_NAME)
        block = archive.read_entry(SIGNATURE_BLOCK_NAME)
    except EntryNotFound:
        return VerifyResult(False, reason="archive is not signed (missing signature entries)")

    try:
        certificate, signature = parse_signature_block(block)
        certificate.public_key().verify(signature, sf, padding.PKCS1v15(), hashes.SHA256())
    except (SignerError, InvalidSignature, ValueError) as exc:
        return VerifyResult(False, reason=f"signature block does not verify: {exc}")
    fingerprint = hashlib.sha256(certificate.public_bytes(serialization.Encoding.DER)).hexdigest()

    sf_manifest_digest = _main_attribute(sf, b"SHA-256-Digest-Manifest")
    if sf_manifest_digest != _digest_b64(manifest):
        return VerifyResult(False, fingerprint, "CERT.SF manifest digest mismatch")
    main_end = manifest.index(b"\r\n\r\n") + 4
    sf_main_digest = _main_attribute(sf, b"SHA-256-Digest-Manifest-Main-Attributes")
    if sf_main_digest is not None and sf_main_digest != _digest_b64(manifest[:main_end]):
        return VerifyResult(False, fingerprint, "CERT.SF main-attributes digest mismatch")
    manifest_section_bytes = dict(_manifest_sections(manifest))
    sf_sections = _section_digests(sf)
    for name, digest in sf_sections.items():
        section = manifest_section_bytes.get(name)
        if section is None or _digest_b64(section) != digest:
            return VerifyResult(False, fingerprint, f"CERT.SF section digest mismatch for {name!r}")

    manifest_digests = _section_digests(manifest)
    content_names = [e.name for e in archive.entries if not is_signature_entry(e.name)]
    for name in content_names:
        expected = manifest_digests.get(name)
        if expected is None:
            return VerifyResult(False, fingerprint, f"entry {name!r} is not covered by MANIFEST.MF")
        if _digest_b64(archive.read_entry(name)) != expected:
            return VerifyResult(False, fingerprint, f"digest mismatch for entry {name!r}")
    for name in manifest_digests:
        if name not in content_names:
            return VerifyResult(False, fingerprint, f"MANIFEST.MF covers missing entry {name!r}")

    if expected_fingerprint is not None and fingerprint != expected_fingerprint.lower():
        return VerifyResult(False, fingerprint, "signer fingerprint does not match the expected value")
    return VerifyResult(True, fingerprint)
