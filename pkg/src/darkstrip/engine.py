"""Runs a patch job end to end over one app.

The flow mirrors how a user patches an app: take the uploaded APK, check
that the selected patches are trusted and applicable, apply their steps
in the listed order, repair the digests of any modified DEX entries,
strip the old signature, rebuild the archive aligned, re-sign it with
the user's identity, and hand back the new APK plus a step-by-step
report.

A job is atomic: any step failure aborts with no output artifact. Given
the same inputs and a seeded identity, two runs produce byte-identical
APKs and reports.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
from dataclasses import dataclass, field

from . import axml, dexpatch, signer, zipkit
from .patches import (
    AppMeta,
    ByteMaskStep,
    Catalog,
    PatchDefinition,
    RemoveElement,
    RemoveManifestElement,
    ReplaceString,
    SetAttribute,
    TrustStore,
    check_applicability,
    detect_conflicts,
    verify_patch_signature,
)

MANIFEST_ENTRY = "AndroidManifest.xml"


class EngineError(Exception):
    """Base class for job-level failures."""


class ManifestMissing(EngineError):
    """The archive has no AndroidManifest.xml."""


class ManifestUnparseable(EngineError):
    """AndroidManifest.xml exists but app metadata cannot be read."""


class PolicyViolation(EngineError):
    """Job policy rejected the patch set before any step ran."""


class ConflictsDetected(PolicyViolation):
    """Selected patches overlap and the policy says abort."""


class StepFailed(EngineError):
    """One step could not be applied; the job aborts with no output."""

    def __init__(self, patch_id: str, step_index: int, cause: Exception):
        super().__init__(f"{patch_id} step {step_index}: {cause}")
        self.patch_id = patch_id
        self.step_index = step_index
        self.cause = cause


@dataclass
class JobPolicy:
    require_verified: bool = False
    on_conflict: str = "warn"  # "warn" | "abort"
    min_signatures: int = 1


@dataclass
class PatchJob:
    """Everything needed to patch one app: input bytes, patches, identity."""

    apk: bytes
    patches: list[PatchDefinition]
    identity: signer.SigningIdentity
    policy: JobPolicy = field(default_factory=JobPolicy)
    trust_store: TrustStore | None = None


@dataclass
class StepOutcome:
    kind: str
    status: str  # "applied" | "skipped"
    detail: str
    count: int = 0


@dataclass
class PatchOutcome:
    patch_id: str
    status: str
    steps: list[StepOutcome] = field(default_factory=list)


@dataclass
class PatchReport:
    app: AppMeta
    input_sha256: str
    output_sha256: str
    signer_fingerprint: str
    patches: list[PatchOutcome] = field(default_factory=list)
    conflicts: list[str] = field(default_factory=list)
    require_verified: bool = False


def report_to_dict(report: PatchReport) -> dict:
    return {
        "app": {"package_name": report.app.package_name, "version_code": report.app.version_code},
        "input_sha256": report.input_sha256,
        "output_sha256": report.output_sha256,
        "signer_fingerprint": report.signer_fingerprint,
        "require_verified": report.require_verified,
        "conflicts": list(report.conflicts),
        "patches": [
            {
                "id": outcome.patch_id,
                "status": outcome.status,
                "steps": [
                    {"kind": s.kind, "status": s.status, "detail": s.detail, "count": s.count}
                    for s in outcome.steps
                ],
            }
            for outcome in report.patches
        ],
    }


def encode_report(report: PatchReport) -> str:
    """Report file form: same JSON family as patch files."""
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


def extract_app_meta(archive: zipkit.ApkArchive) -> AppMeta:
    """Package name and versionCode, straight from the binary manifest."""
    try:
        data = archive.read_entry(MANIFEST_ENTRY)
    except zipkit.EntryNotFound as exc:
        raise ManifestMissing("archive has no AndroidManifest.xml") from exc
    try:
        doc = axml.parse_axml(data)
    except axml.AxmlError as exc:
        raise ManifestUnparseable(f"AndroidManifest.xml does not parse: {exc}") from exc
    root = doc.root
    package_attr = axml.find_attribute(doc, root, name="package")
    package = axml.attribute_string(doc, package_attr) if package_attr else None
    version_attr = axml.find_attribute(doc, root, resource_id=axml.ATTR_VERSION_CODE)
    if package is None or version_attr is None:
        raise ManifestUnparseable("manifest root lacks package or versionCode")
    return AppMeta(package_name=package, version_code=version_attr.data)


def run_job(job: PatchJob) -> tuple[bytes, PatchReport]:
    """Apply the job's patches and return (signed apk bytes, report)."""
    archive = zipkit.open_archive(job.apk)
    app_meta = extract_app_meta(archive)

    if job.policy.require_verified:
        store = job.trust_store or TrustStore()
        for patch in job.patches:
            status = verify_patch_signature(patch, store)
            if not status.verified or len(status.reviewer_ids) < job.policy.min_signatures:
                raise PolicyViolation(
                    f"patch {patch.id!r} is not verified by "
                    f"{job.policy.min_signatures} trusted reviewer(s)"
                )

    conflicts = detect_conflicts(job.patches, archive)
    conflict_notes = [f"{c.patch_a} / {c.patch_b} on {c.entry}: {c.detail}" for c in conflicts]
    if conflicts and job.policy.on_conflict == "abort":
        raise ConflictsDetected("; ".join(conflict_notes))

    outcomes: list[PatchOutcome] = []
    modified: set[str] = set()
    for patch in job.patches:
        applicability = check_applicability(patch, app_meta)
        if not applicability.applicable:
            outcomes.append(PatchOutcome(patch.id, f"skipped: {applicability.reason}"))
            continue
        agnostic = patch.specificity == "app_agnostic"
        outcome = PatchOutcome(patch.id, "applied")
        for index, step in enumerate(patch.steps):
            try:
                step_outcome = _apply_step(archive, step, agnostic, modified)
            except EngineError:
                raise
            except (axml.AxmlError, dexpatch.MaskError, dexpatch.DexError, zipkit.ZipError) as exc:
                raise StepFailed(patch.id, index, exc) from exc
            outcome.steps.append(step_outcome)
        if all(s.status == "skipped" for s in outcome.steps):
            outcome.status = "skipped: no step matched anything"
        outcomes.append(outcome)

    for name in sorted(modified):
        if name.endswith(".dex"):
            try:
                archive.replace_entry(name, dexpatch.repair_digests(archive.read_entry(name)))
            except dexpatch.DexError as exc:
                raise EngineError(f"cannot repair digests of {name!r} after patching: {exc}") from exc

    for name in [e.name for e in archive.entries if signer.is_signature_entry(e.name)]:
        archive.remove_entry(name)
    signer.sign_apk(archive, job.identity)
    output = zipkit.write_archive(archive, align=4)

    gate = signer.verify_apk(zipkit.open_archive(output))
    if not gate.verified:
        raise EngineError(f"freshly signed output failed verification: {gate.reason}")

    report = PatchReport(
        app=app_meta,
        input_sha256=hashlib.sha256(job.apk).hexdigest(),
        output_sha256=hashlib.sha256(output).hexdigest(),
        signer_fingerprint=job.identity.fingerprint,
        patches=outcomes,
        conflicts=conflict_notes,
        require_verified=job.policy.require_verified,
    )
    return output, report


def resolve_patch_ids(catalog: Catalog, patch_ids: list[str]) -> list[PatchDefinition]:
    """Catalog lookup preserving the user's requested order."""
    selected = []
    for patch_id in patch_ids:
        patch = catalog.by_id(patch_id)
        if patch is None:
            raise EngineError(f"unknown patch id {patch_id!r}")
        selected.append(patch)
    return selected


# ---------------------------------------------------------------------------
# step application


def _apply_step(
    archive: zipkit.ApkArchive, step, agnostic: bool, modified: set[str]
) -> StepOutcome:
    entries = [name for name in archive.names() if fnmatch.fnmatch(name, step.entry_glob)]
    if isinstance(step, (RemoveElement, RemoveManifestElement)):
        count = _edit_documents(archive, entries, step.selector, _remove_nodes, modified)
        return _outcome(step, agnostic, count, "element(s) removed")
    if isinstance(step, SetAttribute):
        def edit(doc, nodes):
            for node in nodes:
                axml.set_attribute(doc, node, step.attr, step.value)
            return len(nodes)

        count = _edit_documents(archive, entries, step.selector, edit, modified)
        return _outcome(step, agnostic, count, "attribute(s) set")
    if isinstance(step, ByteMaskStep):
        total = 0
        for name in entries:
            try:
                patched, n = dexpatch.apply_byte_mask(archive.read_entry(name), step.mask)
            except dexpatch.NoMatch:
                continue
            if n:
                archive.replace_entry(name, patched)
                modified.add(name)
                total += n
        return _outcome(step, agnostic, total, "byte-mask match(es) rewritten")
    if isinstance(step, ReplaceString):
        total = 0
        for name in entries:
            data = archive.read_entry(name)
            n = data.count(step.old)
            if n:
                archive.replace_entry(name, data.replace(step.old, step.new))
                modified.add(name)
                total += n
        return _outcome(step, agnostic, total, "occurrence(s) replaced")
    raise EngineError(f"unknown step kind {type(step).__name__}")


def _remove_nodes(doc, nodes):
    for node in nodes:
        axml.remove_element(doc, node)
    return len(nodes)


def _edit_documents(archive, entries, selector, edit, modified: set[str]) -> int:
    total = 0
    for name in entries:
        doc = axml.parse_axml(archive.read_entry(name))
        nodes = axml.find_elements(doc, selector)
        if not nodes:
            continue
        total += edit(doc, nodes)
        archive.replace_entry(name, axml.serialize_axml(doc))
        modified.add(name)
    return total


def _outcome(step, agnostic: bool, count: int, noun: str) -> StepOutcome:
    # App-agnostic patches must tolerate absent features; app-specific
    # patches that miss their target indicate a stale patch, so they fail.
    kind = step.kind
    if count == 0:
        if agnostic:
            return StepOutcome(kind, "skipped", "no match in this app", 0)
        raise dexpatch.NoMatch(f"{kind} matched nothing in an app-specific patch")
    return StepOutcome(kind, "applied", f"{count} {noun}", count)
