"""Command-line interface: keygen, inspect, list, patch, verify, serve.

Exit codes by failure class: 2 usage, 3 policy (trust or conflict
aborts), 4 step or verification failure, 5 I/O and malformed inputs.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from . import engine, fixtures, patches as patchlib, signer, zipkit
from .engine import ConflictsDetected, EngineError, JobPolicy, PatchJob, PolicyViolation, StepFailed

EXIT_POLICY = 3
EXIT_STEP = 4
EXIT_IO = 5


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _mapped_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (PolicyViolation, ConflictsDetected) as exc:
            _fail(EXIT_POLICY, str(exc))
        except StepFailed as exc:
            _fail(EXIT_STEP, str(exc))
        except (OSError, zipkit.ZipError, patchlib.PatchError, signer.SignerError, EngineError) as exc:
            _fail(EXIT_IO, str(exc))

    return wrapper


@click.group()
@click.version_option()
def main():
    """Remove dark patterns from Android apps with community patches."""


@main.command()
@click.option("--subject", required=True, help="Name embedded in the self-signed certificate.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", default=None, help="Hex seed for a reproducible identity (testing only).")
@_mapped_errors
def keygen(subject: str, out_path: Path, seed: str | None):
    """Generate a signing identity (RSA key plus self-signed certificate)."""
    try:
        seed_bytes = bytes.fromhex(seed) if seed else None
    except ValueError:
        raise click.UsageError("--seed must be hex")
    identity = signer.generate_identity(subject, rng_seed=seed_bytes)
    out_path.write_bytes(identity.to_pem())
    click.echo(f"wrote identity for {subject!r} to {out_path}")
    click.echo(f"certificate fingerprint: {identity.fingerprint}")


@main.command()
@click.argument("apk", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_mapped_errors
def inspect(apk: Path):
    """Show app metadata and the archive's entry list."""
    archive = zipkit.open_archive(apk.read_bytes())
    meta = engine.extract_app_meta(archive)
    click.echo(f"package:     {meta.package_name}")
    click.echo(f"versionCode: {meta.version_code}")
    click.echo(f"entries:     {len(archive.entries)}")
    for entry in archive.entries:
        method = "stored" if entry.method == zipkit.STORED else "deflated"
        click.echo(f"  {entry.name}  ({method}, {len(entry.data)} bytes)")


@main.group(name="patches")
def patches_group():
    """Work with the patch catalog."""


@patches_group.command(name="list")
@click.option("--catalog", "catalog_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--apk", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--trust-store", "trust_store_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@_mapped_errors
def list_patches(catalog_dir: Path, apk: Path | None, trust_store_path: Path | None):
    """List catalog patches with verification and applicability columns."""
    catalog = patchlib.load_catalog(catalog_dir)
    store = _load_store(catalog_dir, trust_store_path)
    app_meta = None
    if apk is not None:
        app_meta = engine.extract_app_meta(zipkit.open_archive(apk.read_bytes()))
        click.echo(f"app: {app_meta.package_name} versionCode {app_meta.version_code}")
    header = f"{'ID':<28} {'CLASS':<24} {'MECHANISM':<12} {'SCOPE':<13} {'VERIFIED':<9}"
    if app_meta:
        header += " APPLICABLE"
    click.echo(header)
    for patch in catalog.patches:
        verified = "yes" if patchlib.verify_patch_signature(patch, store).verified else "no"
        line = (
            f"{patch.id:<28} {patch.dark_pattern_class:<24} {patch.mechanism:<12} "
            f"{patch.specificity:<13} {verified:<9}"
        )
        if app_meta:
            result = patchlib.check_applicability(patch, app_meta)
            line += " yes" if result.applicable else f" no ({result.reason})"
        click.echo(line)


@main.command(name="patch")
@click.argument("apk", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--catalog", "catalog_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--apply", "apply_ids", required=True, help="Comma-separated patch ids, applied in order.")
@click.option("--identity", "identity_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--require-verified", is_flag=True, default=False)
@click.option("--on-conflict", type=click.Choice(["warn", "abort"]), default="warn")
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--trust-store", "trust_store_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@_mapped_errors
def patch_command(
    apk: Path,
    catalog_dir: Path,
    apply_ids: str,
    identity_path: Path,
    out_path: Path,
    require_verified: bool,
    on_conflict: str,
    report_path: Path | None,
    trust_store_path: Path | None,
):
    """Apply catalog patches to an APK and re-sign the result."""
    catalog = patchlib.load_catalog(catalog_dir)
    ids = [part.strip() for part in apply_ids.split(",") if part.strip()]
    if not ids:
        raise click.UsageError("--apply needs at least one patch id")
    try:
        selected = engine.resolve_patch_ids(catalog, ids)
    except EngineError as exc:
        raise click.UsageError(str(exc))
    job = PatchJob(
        apk=apk.read_bytes(),
        patches=selected,
        identity=signer.SigningIdentity.from_pem(identity_path.read_bytes()),
        policy=JobPolicy(require_verified=require_verified, on_conflict=on_conflict),
        trust_store=_load_store(catalog_dir, trust_store_path),
    )
    output, report = engine.run_job(job)
    out_path.write_bytes(output)
    if report_path is not None:
        report_path.write_text(engine.encode_report(report), encoding="utf-8")
    for outcome in report.patches:
        click.echo(f"{outcome.patch_id}: {outcome.status}")
        for step in outcome.steps:
            click.echo(f"  - {step.kind}: {step.status} ({step.detail})")
    for note in report.conflicts:
        click.echo(f"warning: conflict: {note}", err=True)
    click.echo(f"wrote {out_path} ({len(output)} bytes), signer {report.signer_fingerprint[:16]}…")


@main.command()
@click.argument("apk", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--fingerprint", default=None, help="Expected signer certificate fingerprint (hex).")
@_mapped_errors
def verify(apk: Path, fingerprint: str | None):
    """Verify the APK's v1 signature."""
    archive = zipkit.open_archive(apk.read_bytes())
    result = signer.verify_apk(archive, expected_fingerprint=fingerprint)
    if result.verified:
        click.echo(f"verified: signer {result.fingerprint}")
    else:
        _fail(EXIT_STEP, f"verification failed: {result.reason}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True, type=int)
@click.option("--catalog", "catalog_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path), envvar="DARKSTRIP_CATALOG")
@click.option("--trust-store", "trust_store_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, envvar="DARKSTRIP_TRUST_STORE")
@click.option("--upload-limit", default=64 * 1024 * 1024, show_default=True, type=int, envvar="DARKSTRIP_UPLOAD_LIMIT")
@click.option("--artifact-ttl", default=3600.0, show_default=True, type=float, envvar="DARKSTRIP_ARTIFACT_TTL")
@click.option("--identity", "identity_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, envvar="DARKSTRIP_IDENTITY")
@click.option("--portal", "portal_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None, envvar="DARKSTRIP_PORTAL", help="Serve the built browser portal from this directory at /.")
@_mapped_errors
def serve(host, port, catalog_dir, trust_store_path, upload_limit, artifact_ttl, identity_path, portal_dir):
    """Run the patching service (HTTP JSON API for the portal)."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        catalog_dir=Path(catalog_dir),
        trust_store_path=trust_store_path and Path(trust_store_path),
        upload_limit=upload_limit,
        artifact_ttl=artifact_ttl,
        identity_path=identity_path and Path(identity_path),
        portal_dir=portal_dir and Path(portal_dir),
    )
    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")


@main.command(name="make-fixture")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--catalog", "catalog_dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@_mapped_errors
def make_fixture(out_path: Path, catalog_dir: Path | None):
    """Write the FixtureBird demo app (and optionally its patch catalog)."""
    out_path.write_bytes(fixtures.fixture_apk())
    click.echo(f"wrote {out_path}")
    if catalog_dir is not None:
        fixtures.write_catalog(catalog_dir)
        click.echo(f"wrote bundled catalog to {catalog_dir}")


def _load_store(catalog_dir: Path, trust_store_path: Path | None) -> patchlib.TrustStore:
    if trust_store_path is not None:
        return patchlib.TrustStore.load(trust_store_path)
    default = Path(catalog_dir) / patchlib.TRUST_STORE_FILENAME
    if default.exists():
        return patchlib.TrustStore.load(default)
    return patchlib.TrustStore()


if __name__ == "__main__":
    main()
