"""Patch definitions: file format, taxonomy, applicability, and trust.

A patch is a declarative JSON document. Steps come from a closed, hand-
auditable vocabulary (remove an element, set an attribute, apply a byte
mask, replace an equal-length string, drop a manifest element) instead of
arbitrary scripts; anything a patch can do is visible in its diff.

Reviewers endorse a patch by signing its canonical encoding (every field
except the signatures themselves, serialized as compact UTF-8 JSON with
a fixed field order). Verification checks each signature against an
operator-managed trust store of reviewer public keys; one valid reviewer
signature makes a patch "verified" unless the engine policy asks for
more.
"""

from __future__ import annotations

import dataclasses
import fnmatch
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ed25519

from . import axml
from .axml import AttrConstraint, AttrSpec, Selector, TypedValue
from .dexpatch import ByteMask, InvalidMask

DARK_PATTERN_CLASSES = ("interface_interference", "nagging", "forced_action", "obstruction", "sneaking")
MECHANISMS = ("interface", "control_flow")
SPECIFICITIES = ("app_agnostic", "app_specific")

MANIFEST_ENTRY = "AndroidManifest.xml"


class PatchError(Exception):
    """Base class for patch-format errors."""


class PatchSyntaxError(PatchError):
    """Patch text is not well-formed."""


class InvariantViolation(PatchError):
    """A structurally valid patch breaks a semantic rule."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class MalformedSignature(PatchError):
    """A signature record is structurally unusable."""


@dataclass(frozen=True)
class TargetSpec:
    """One supported app: package name plus a half-open version range."""

    package_name: str
    min_version_code: int | None = None
    max_version_code_exclusive: int | None = None

    def __post_init__(self) -> None:
        lo, hi = self.min_version_code, self.max_version_code_exclusive
        if lo is not None and hi is not None and not lo < hi:
            raise InvariantViolation("targets", f"empty version range [{lo}, {hi})")

    def matches(self, package_name: str, version_code: int) -> bool:
        if package_name != self.package_name:
            return False
        if self.min_version_code is not None and version_code < self.min_version_code:
            return False
        if self.max_version_code_exclusive is not None and version_code >= self.max_version_code_exclusive:
            return False
        return True


@dataclass(frozen=True)
class RemoveElement:
    entry_glob: str
    selector: Selector
    kind = "remove_element"


@dataclass(frozen=True)
class SetAttribute:
    entry_glob: str
    selector: Selector
    attr: AttrSpec
    value: TypedValue | str
    kind = "set_attribute"


@dataclass(frozen=True)
class ByteMaskStep:
    entry_glob: str
    mask: ByteMask
    kind = "byte_mask"


@dataclass(frozen=True)
class ReplaceString:
    entry_glob: str
    old: bytes
    new: bytes
    kind = "replace_string"

    def __post_init__(self) -> None:
        if len(self.old) != len(self.new):
            raise InvariantViolation("steps", "replace_string old and new must be the same byte length")
        if not self.old:
            raise InvariantViolation("steps", "replace_string old must be nonempty")


@dataclass(frozen=True)
class RemoveManifestElement:
    selector: Selector
    kind = "remove_manifest_element"
    entry_glob = MANIFEST_ENTRY


PatchStep = RemoveElement | SetAttribute | ByteMaskStep | ReplaceString | RemoveManifestElement


@dataclass(frozen=True)
class ReviewerSignature:
    reviewer_id: str
    public_key_fingerprint: bytes
    signature: bytes


@dataclass(frozen=True)
class PatchDefinition:
    id: str
    name: str
    description: str
    author: str
    dark_pattern_class: str
    mechanism: str
    specificity: str
    targets: tuple[TargetSpec, ...] = ()
    steps: tuple[PatchStep, ...] = ()
    signatures: tuple[ReviewerSignature, ...] = ()

    def __post_init__(self) -> None:
        if not self.id:
            raise InvariantViolation("id", "must be nonempty")
        if self.dark_pattern_class not in DARK_PATTERN_CLASSES:
            raise InvariantViolation("class", f"unknown dark pattern class {self.dark_pattern_class!r}")
        if self.mechanism not in MECHANISMS:
            raise InvariantViolation("mechanism", f"unknown mechanism {self.mechanism!r}")
        if self.specificity not in SPECIFICITIES:
            raise InvariantViolation("specificity", f"unknown specificity {self.specificity!r}")
        if (self.specificity == "app_specific") != bool(self.targets):
            raise InvariantViolation(
                "specificity", "app_specific patches need targets; app_agnostic patches must not have any"
            )
        if not self.steps:
            raise InvariantViolation("steps", "patch needs at least one step")


@dataclass(frozen=True)
class AppMeta:
    package_name: str
    version_code: int


@dataclass(frozen=True)
class Applicability:
    applicable: bool
    reason: str | None = None


def check_applicability(patch: PatchDefinition, app_meta: AppMeta) -> Applicability:
    """App-agnostic patches always apply; app-specific need a target hit."""
    if patch.specificity == "app_agnostic":
        return Applicability(True)
    for target in patch.targets:
        if target.matches(app_meta.package_name, app_meta.version_code):
            return Applicability(True)
    return Applicability(
        False, f"no target matches {app_meta.package_name} versionCode {app_meta.version_code}"
    )


# ---------------------------------------------------------------------------
# value and selector literals


def format_value_literal(value: TypedValue | str) -> str:
    if isinstance(value, str):
        return f"str:{value}"
    code, data = value.type_code, value.data
    if code == axml.TYPE_REFERENCE:
        return f"ref:0x{data:08x}"
    if code == axml.TYPE_INT_DEC:
        signed = data - 0x100000000 if data > 0x7FFFFFFF else data
        return f"int:{signed}"
    if code == axml.TYPE_INT_HEX:
        return f"hex:0x{data:x}"
    if code == axml.TYPE_INT_BOOLEAN:
        return f"bool:{'true' if data else 'false'}"
    if axml.TYPE_FIRST_COLOR <= code <= axml.TYPE_LAST_COLOR:
        return f"color:#{data:08x}"
    return f"typed:0x{code:02x}:0x{data:08x}"


def parse_value_literal(text: str) -> TypedValue | str:
    if not isinstance(text, str) or ":" not in text:
        raise PatchSyntaxError(f"bad value literal {text!r}")
    prefix, _, rest = text.partition(":")
    try:
        if prefix == "str":
            return rest
        if prefix == "ref":
            return TypedValue(axml.TYPE_REFERENCE, int(rest, 16))
        if prefix == "int":
            return TypedValue.int_dec(int(rest, 10))
        if prefix == "hex":
            return TypedValue(axml.TYPE_INT_HEX, int(rest, 16))
        if prefix == "bool":
            if rest not in ("true", "false"):
                raise ValueError(rest)
            return TypedValue.boolean(rest == "true")
        if prefix == "color":
            return TypedValue(axml.TYPE_FIRST_COLOR, int(rest.lstrip("#"), 16))
        if prefix == "typed":
            code, _, data = rest.partition(":")
            return TypedValue(int(code, 16), int(data, 16))
    except ValueError as exc:
        raise PatchSyntaxError(f"bad value literal {text!r}: {exc}") from exc
    raise PatchSyntaxError(f"unknown value literal prefix {prefix!r}")


def _ns_to_json(ns_uri: str | None) -> str | None:
    if ns_uri == axml.ANDROID_NS_URI:
        return "android"
    return ns_uri


def _ns_from_json(ns: str | None) -> str | None:
    if ns == "android":
        return axml.ANDROID_NS_URI
    return ns


def selector_to_dict(selector: Selector) -> dict:
    out: dict = {}
    if selector.element_name is not None:
        out["element"] = selector.element_name
    if selector.path is not None:
        out["path"] = list(selector.path)
    if selector.attrs:
        attrs = []
        for constraint in selector.attrs:
            item: dict = {}
            if constraint.name is not None:
                item["name"] = constraint.name
            if constraint.resource_id is not None:
                item["resource_id"] = f"0x{constraint.resource_id:08x}"
            if constraint.expected is not None:
                item["equals"] = format_value_literal(constraint.expected)
            attrs.append(item)
        out["attrs"] = attrs
    return out


def selector_from_dict(raw: dict) -> Selector:
    if not isinstance(raw, dict):
        raise PatchSyntaxError("selector must be an object")
    constraints = []
    for item in raw.get("attrs", ()):
        rid = item.get("resource_id")
        try:
            constraints.append(
                AttrConstraint(
                    name=item.get("name"),
                    resource_id=int(rid, 16) if isinstance(rid, str) else rid,
                    expected=parse_value_literal(item["equals"]) if "equals" in item else None,
                )
            )
        except ValueError as exc:
            raise InvariantViolation("selector", str(exc)) from exc
    path = raw.get("path")
    try:
        return Selector(
            element_name=raw.get("element"),
            attrs=tuple(constraints),
            path=tuple(path) if path is not None else None,
        )
    except ValueError as exc:
        raise InvariantViolation("selector", str(exc)) from exc


def _attr_spec_to_dict(spec: AttrSpec) -> dict:
    out: dict = {"name": spec.name}
    if spec.ns_uri is not None:
        out["ns"] = _ns_to_json(spec.ns_uri)
    if spec.resource_id is not None:
        out["resource_id"] = f"0x{spec.resource_id:08x}"
    return out


def _attr_spec_from_dict(raw: dict) -> AttrSpec:
    rid = raw.get("resource_id")
    return AttrSpec(
        name=raw["name"],
        ns_uri=_ns_from_json(raw.get("ns")),
        resource_id=int(rid, 16) if isinstance(rid, str) else rid,
    )


def step_to_dict(step: PatchStep) -> dict:
    if isinstance(step, RemoveElement):
        return {"kind": step.kind, "entry": step.entry_glob, "selector": selector_to_dict(step.selector)}
    if isinstance(step, SetAttribute):
        return {
            "kind": step.kind,
            "entry": step.entry_glob,
            "selector": selector_to_dict(step.selector),
            "attr": _attr_spec_to_dict(step.attr),
            "value": format_value_literal(step.value),
        }
    if isinstance(step, ByteMaskStep):
        return {
            "kind": step.kind,
            "entry": step.entry_glob,
            "pattern": step.mask.pattern_text(),
            "replacement": step.mask.replacement_text(),
            "match": str(step.mask.policy),
        }
    if isinstance(step, ReplaceString):
        return {
            "kind": step.kind,
            "entry": step.entry_glob,
            "old": step.old.decode("utf-8"),
            "new": step.new.decode("utf-8"),
        }
    if isinstance(step, RemoveManifestElement):
        return {"kind": step.kind, "selector": selector_to_dict(step.selector)}
    raise PatchError(f"unknown step type {type(step).__name__}")


def step_from_dict(raw: dict) -> PatchStep:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise PatchSyntaxError("step must be an object with a 'kind'")
    kind = raw["kind"]
    try:
        if kind == "remove_element":
            return RemoveElement(raw["entry"], selector_from_dict(raw["selector"]))
        if kind == "set_attribute":
            value = parse_value_literal(raw["value"])
            return SetAttribute(
                raw["entry"], selector_from_dict(raw["selector"]), _attr_spec_from_dict(raw["attr"]), value
            )
        if kind == "byte_mask":
            try:
                mask = ByteMask.parse(raw["pattern"], raw["replacement"], raw.get("match", "all"))
            except InvalidMask as exc:
                raise InvariantViolation("steps", str(exc)) from exc
            return ByteMaskStep(raw["entry"], mask)
        if kind == "replace_string":
            return ReplaceString(raw["entry"], raw["old"].encode("utf-8"), raw["new"].encode("utf-8"))
        if kind == "remove_manifest_element":
            return RemoveManifestElement(selector_from_dict(raw["selector"]))
    except KeyError as exc:
        raise PatchSyntaxError(f"step {kind!r} is missing field {exc}") from exc
    raise InvariantViolation("steps", f"unknown step kind {kind!r}")


def patch_to_dict(patch: PatchDefinition, include_signatures: bool = True) -> dict:
    out = {
        "id": patch.id,
        "name": patch.name,
        "description": patch.description,
        "author": patch.author,
        "class": patch.dark_pattern_class,
        "mechanism": patch.mechanism,
        "specificity": patch.specificity,
        "targets": [
            {
                key: value
                for key, value in (
                    ("package", target.package_name),
                    ("min_version_code", target.min_version_code),
                    ("max_version_code_exclusive", target.max_version_code_exclusive),
                )
                if value is not None
            }
            for target in patch.targets
        ],
        "steps": [step_to_dict(step) for step in patch.steps],
    }
    if include_signatures:
        out["signatures"] = [
            {
                "reviewer_id": sig.reviewer_id,
                "public_key_fingerprint": sig.public_key_fingerprint.hex(),
                "signature": sig.signature.hex(),
            }
            for sig in patch.signatures
        ]
    return out


def patch_from_dict(raw: dict) -> PatchDefinition:
    if not isinstance(raw, dict):
        raise PatchSyntaxError("patch document must be a JSON object")
    try:
        targets = tuple(
            TargetSpec(
                package_name=t["package"],
                min_version_code=t.get("min_version_code"),
                max_version_code_exclusive=t.get("max_version_code_exclusive"),
            )
            for t in raw.get("targets", ())
        )
        steps = tuple(step_from_dict(s) for s in raw.get("steps", ()))
        signatures = tuple(
            ReviewerSignature(
                reviewer_id=s["reviewer_id"],
                public_key_fingerprint=_hex_bytes(s["public_key_fingerprint"], "public_key_fingerprint"),
                signature=_hex_bytes(s["signature"], "signature"),
            )
            for s in raw.get("signatures", ())
        )
        return PatchDefinition(
            id=raw["id"],
            name=raw["name"],
            description=raw["description"],
            author=raw["author"],
            dark_pattern_class=raw["class"],
            mechanism=raw["mechanism"],
            specificity=raw["specificity"],
            targets=targets,
            steps=steps,
            signatures=signatures,
        )
    except KeyError as exc:
        raise PatchSyntaxError(f"patch is missing field {exc}") from exc


def _hex_bytes(text: str, what: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except (ValueError, TypeError) as exc:
        raise MalformedSignature(f"{what} is not valid hex") from exc


def parse_patch(text: str) -> PatchDefinition:
    """Parse a patch file; enforces every structural invariant."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PatchSyntaxError(f"not valid JSON: {exc}") from exc
    return patch_from_dict(raw)


def encode_patch(patch: PatchDefinition) -> str:
    """Pretty, diff-friendly file form (signatures included)."""
    return json.dumps(patch_to_dict(patch), indent=2, ensure_ascii=False) + "\n"


def canonical_encoding(patch: PatchDefinition) -> bytes:
    """The byte string reviewers sign: everything except the signatures.

    Compact UTF-8 JSON with fields in fixed order; no insignificant
    whitespace, so the encoding is stable across parse/encode cycles.
    """
    return json.dumps(
        patch_to_dict(patch, include_signatures=False), ensure_ascii=False, separators=(",", ":")
    ).encode("utf-8")


# ---------------------------------------------------------------------------
# trust store and signatures


def key_fingerprint(public_key: ed25519.Ed25519PublicKey) -> bytes:
    from cryptography.hazmat.primitives import serialization

    raw = public_key.public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return hashlib.sha256(raw).digest()


@dataclass(frozen=True)
class ReviewerKey:
    reviewer_id: str
    public_key: bytes  # raw 32-byte Ed25519 key

    @property
    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.public_key).digest()


@dataclass
class TrustStore:
    """Reviewer public keys the operator has chosen to trust."""

    reviewers: list[ReviewerKey] = field(default_factory=list)

    def by_fingerprint(self, fingerprint: bytes) -> ReviewerKey | None:
        for key in self.reviewers:
            if key.fingerprint == fingerprint:
                return key
        return None

    @classmethod
    def parse(cls, text: str) -> "TrustStore":
        try:
            raw = json.loads(text)
            reviewers = [
                ReviewerKey(reviewer_id=r["id"], public_key=bytes.fromhex(r["public_key"]))
                for r in raw["reviewers"]
            ]
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise PatchSyntaxError(f"bad trust store: {exc}") from exc
        return cls(reviewers)

    @classmethod
    def load(cls, path: str | Path) -> "TrustStore":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def encode(self) -> str:
        doc = {
            "reviewers": [
                {"id": r.reviewer_id, "algorithm": "ed25519", "public_key": r.public_key.hex()}
                for r in self.reviewers
            ]
        }
        return json.dumps(doc, indent=2) + "\n"


@dataclass(frozen=True)
class VerificationStatus:
    verified: bool
    reviewer_ids: tuple[str, ...] = ()


def sign_patch(
    patch: PatchDefinition, reviewer_id: str, private_key: ed25519.Ed25519PrivateKey
) -> PatchDefinition:
    """Return a copy of the patch with this reviewer's signature appended."""
    signature = ReviewerSignature(
        reviewer_id=reviewer_id,
        public_key_fingerprint=key_fingerprint(private_key.public_key()),
        signature=private_key.sign(canonical_encoding(patch)),
    )
    return dataclasses.replace(patch, signatures=patch.signatures + (signature,))


def verify_patch_signature(patch: PatchDefinition, trust_store: TrustStore) -> VerificationStatus:
    """Verified iff at least one signature validates against the store."""
    message = canonical_encoding(patch)
    valid: list[str] = []
    for sig in patch.signatures:
        if len(sig.public_key_fingerprint) != 32 or len(sig.signature) != 64:
            raise MalformedSignature(
                f"signature by {sig.reviewer_id!r} has the wrong shape for ed25519"
            )
        key = trust_store.by_fingerprint(sig.public_key_fingerprint)
        if key is None:
            continue
        try:
            ed25519.Ed25519PublicKey.from_public_bytes(key.public_key).verify(sig.signature, message)
        except InvalidSignature:
            continue
        valid.append(key.reviewer_id)
    if valid:
        return VerificationStatus(True, tuple(dict.fromkeys(valid)))
    return VerificationStatus(False)


# ---------------------------------------------------------------------------
# catalog


@dataclass
class Catalog:
    patches: list[PatchDefinition] = field(default_factory=list)

    def by_id(self, patch_id: str) -> PatchDefinition | None:
        for patch in self.patches:
            if patch.id == patch_id:
                return patch
        return None


TRUST_STORE_FILENAME = "trust-store.json"
PATCH_FILE_SUFFIX = ".patch.json"


def load_catalog(directory: str | Path) -> Catalog:
    """Read every ``*.patch.json`` file in the directory, sorted by name.

    The trust store usually sits next to the patches as
    ``trust-store.json``; any unparseable patch file fails loudly rather
    than being skipped.
    """
    catalog = Catalog()
    seen: set[str] = set()
    for path in sorted(Path(directory).glob(f"*{PATCH_FILE_SUFFIX}")):
        patch = parse_patch(path.read_text(encoding="utf-8"))
        if patch.id in seen:
            raise InvariantViolation("id", f"duplicate patch id {patch.id!r} in catalog")
        seen.add(patch.id)
        catalog.patches.append(patch)
    return catalog


# ---------------------------------------------------------------------------
# conflict detection


@dataclass(frozen=True)
class Conflict:
    patch_a: str
    patch_b: str
    entry: str
    detail: str


def detect_conflicts(patches: list[PatchDefinition], archive=None) -> list[Conflict]:
    """Advisory pairwise check for steps that touch the same bytes or nodes.

    With an archive the check is concrete: entry globs are resolved to
    real entries, selectors to node sets, and byte masks to replacement
    windows. Without one, only like-for-like selector equality and glob
    overlap can be reported.
    """
    conflicts: list[Conflict] = []
    for i, first in enumerate(patches):
        for second in patches[i + 1 :]:
            for step_a in first.steps:
                for step_b in second.steps:
                    hit = _steps_conflict(step_a, step_b, archive)
                    if hit is not None:
                        conflicts.append(Conflict(first.id, second.id, hit[0], hit[1]))
    return conflicts


def _shared_entries(glob_a: str, glob_b: str, archive) -> list[str]:
    if archive is not None:
        names = archive.names()
        return [n for n in names if fnmatch.fnmatch(n, glob_a) and fnmatch.fnmatch(n, glob_b)]
    if glob_a == glob_b or fnmatch.fnmatch(glob_a, glob_b) or fnmatch.fnmatch(glob_b, glob_a):
        return [glob_a]
    return []


def _steps_conflict(step_a: PatchStep, step_b: PatchStep, archive) -> tuple[str, str] | None:
    selector_kinds = (RemoveElement, SetAttribute, RemoveManifestElement)
    byte_kinds = (ByteMaskStep, ReplaceString)
    shared = _shared_entries(step_a.entry_glob, step_b.entry_glob, archive)
    if not shared:
        return None
    if isinstance(step_a, selector_kinds) and isinstance(step_b, selector_kinds):
        if archive is None:
            if step_a.selector == step_b.selector:
                return step_a.entry_glob, "identical selectors"
            return None
        for entry in shared:
            try:
                doc = axml.parse_axml(archive.read_entry(entry))
            except axml.AxmlError:
                continue
            nodes_a = {id(n) for n in axml.find_elements(doc, step_a.selector)}
            nodes_b = {id(n) for n in axml.find_elements(doc, step_b.selector)}
            if nodes_a & nodes_b:
                return entry, "selectors resolve to the same element"
        return None
    if isinstance(step_a, byte_kinds) and isinstance(step_b, byte_kinds):
        if archive is None:
            return None
        for entry in shared:
            data = archive.read_entry(entry)
            if _byte_windows_overlap(_step_windows(step_a, data), _step_windows(step_b, data)):
                return entry, "byte replacement windows overlap"
        return None
    return None


def _step_windows(step: PatchStep, data: bytes) -> list[tuple[int, int]]:
    from .dexpatch import find_matches

    if isinstance(step, ByteMaskStep):
        width = len(step.mask.pattern)
        return [(off, off + width) for off in find_matches(data, step.mask)]
    windows = []
    start = 0
    while True:
        at = data.find(step.old, start)
        if at == -1:
            return windows
        windows.append((at, at + len(step.old)))
        start = at + len(step.old)


def _byte_windows_overlap(wins_a: list[tuple[int, int]], wins_b: list[tuple[int, int]]) -> bool:
    for a_lo, a_hi in wins_a:
        for b_lo, b_hi in wins_b:
            if a_lo < b_hi and b_lo < a_hi:
                return True
    return False
