"""HTTP facade for the three-step flow: upload, pick patches, download.

Patching runs server-side: clients upload an APK, see the catalog
annotated with applicability and verification status, submit a job, poll
it, and download the re-signed artifact. Jobs move through
queued -> running -> done/failed exactly once; artifacts are immutable
once written and everything is kept in memory and dropped after a
configurable TTL, so uploaded apps never persist.

The signing identity comes from the operator's configuration; when no
identity file is given, one is generated when the service starts, unique
to that deployment.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response

from . import engine, signer, zipkit
from .engine import EngineError, JobPolicy, PatchJob
from .patches import (
    AppMeta,
    TRUST_STORE_FILENAME,
    TrustStore,
    check_applicability,
    load_catalog,
    verify_patch_signature,
)


@dataclass
class ServiceConfig:
    catalog_dir: Path
    trust_store_path: Path | None = None
    upload_limit: int = 64 * 1024 * 1024
    artifact_ttl: float = 3600.0
    identity_path: Path | None = None
    identity_seed: bytes | None = None
    portal_dir: Path | None = None  # built portal statics, served at /


@dataclass
class JobRecord:
    job_id: str
    state: str  # queued | running | done | failed
    created_at: float
    report: engine.PatchReport | None = None
    error: str | None = None
    output: bytes | None = None


@dataclass
class _StoredApk:
    data: bytes
    meta: AppMeta
    created_at: float


@dataclass
class ServiceState:
    config: ServiceConfig
    identity: signer.SigningIdentity
    trust_store: TrustStore
    apks: dict[str, _StoredApk] = field(default_factory=dict)
    jobs: dict[str, JobRecord] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def purge_expired(self) -> None:
        deadline = time.monotonic() - self.config.artifact_ttl
        with self.lock:
            for apk_id in [k for k, v in self.apks.items() if v.created_at < deadline]:
                del self.apks[apk_id]
            for job_id in [
                k
                for k, v in self.jobs.items()
                if v.created_at < deadline and v.state in ("done", "failed")
            ]:
                del self.jobs[job_id]


def _load_identity(config: ServiceConfig) -> signer.SigningIdentity:
    if config.identity_path is not None:
        return signer.SigningIdentity.from_pem(Path(config.identity_path).read_bytes())
    if config.identity_seed is not None:
        return signer.generate_identity("darkstrip service", rng_seed=config.identity_seed)
    return signer.generate_identity("darkstrip service")


def _load_trust_store(config: ServiceConfig) -> TrustStore:
    path = config.trust_store_path or (Path(config.catalog_dir) / TRUST_STORE_FILENAME)
    if Path(path).exists():
        return TrustStore.load(path)
    return TrustStore()


def _job_json(record: JobRecord) -> dict:
    out = {"job_id": record.job_id, "state": record.state, "created_at": record.created_at}
    if record.report is not None:
        out["report"] = engine.report_to_dict(record.report)
    if record.error is not None:
        out["error"] = record.error
    return out


def create_app(config: ServiceConfig) -> FastAPI:
    state = ServiceState(
        config=config,
        identity=_load_identity(config),
        trust_store=_load_trust_store(config),
    )
    app = FastAPI(title="darkstrip", version="0.1.0")
    app.state.darkstrip = state

    @app.post("/api/apks")
    async def upload_apk(request: Request):
        state.purge_expired()
        data = await request.body()
        if len(data) > config.upload_limit:
            raise HTTPException(413, "upload exceeds the configured size limit")
        try:
            meta = engine.extract_app_meta(zipkit.open_archive(data))
        except (zipkit.ZipError, EngineError) as exc:
            raise HTTPException(422, f"not an apk: {exc}")
        apk_id = uuid.uuid4().hex
        with state.lock:
            state.apks[apk_id] = _StoredApk(data=data, meta=meta, created_at=time.monotonic())
        return {
            "apk_id": apk_id,
            "app_meta": {"package_name": meta.package_name, "version_code": meta.version_code},
        }

    @app.get("/api/apks/{apk_id}/patches")
    def list_patches(apk_id: str):
        state.purge_expired()
        with state.lock:
            stored = state.apks.get(apk_id)
        if stored is None:
            raise HTTPException(404, "unknown apk id")
        catalog = load_catalog(config.catalog_dir)
        out = []
        for patch in catalog.patches:
            applicability = check_applicability(patch, stored.meta)
            status = verify_patch_signature(patch, state.trust_store)
            out.append(
                {
                    "id": patch.id,
                    "name": patch.name,
                    "description": patch.description,
                    "author": patch.author,
                    "class": patch.dark_pattern_class,
                    "mechanism": patch.mechanism,
                    "specificity": patch.specificity,
                    "applicable": applicability.applicable,
                    "not_applicable_reason": applicability.reason,
                    "verified": status.verified,
                    "reviewers": list(status.reviewer_ids),
                }
            )
        return {"patches": out}

    @app.post("/api/jobs")
    async def create_job(request: Request):
        state.purge_expired()
        body = await request.json()
        apk_id = body.get("apk_id")
        patch_ids = body.get("patch_ids", [])
        policy_raw = body.get("policy", {})
        with state.lock:
            stored = state.apks.get(apk_id)
        if stored is None:
            raise HTTPException(404, "unknown apk id")
        catalog = load_catalog(config.catalog_dir)
        try:
            selected = engine.resolve_patch_ids(catalog, list(patch_ids))
        except EngineError as exc:
            raise HTTPException(404, str(exc))
        policy = JobPolicy(
            require_verified=bool(policy_raw.get("require_verified", False)),
            on_conflict=policy_raw.get("on_conflict", "warn"),
        )
        job_id = uuid.uuid4().hex
        record = JobRecord(job_id=job_id, state="queued", created_at=time.monotonic())
        with state.lock:
            state.jobs[job_id] = record
        job = PatchJob(
            apk=stored.data,
            patches=selected,
            identity=state.identity,
            policy=policy,
            trust_store=state.trust_store,
        )
        worker = threading.Thread(target=_run_job, args=(state, job_id, job), daemon=True)
        worker.start()
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        with state.lock:
            record = state.jobs.get(job_id)
            if record is None:
                raise HTTPException(404, "unknown job id")
            return _job_json(record)

    @app.get("/api/jobs/{job_id}/artifact")
    def download(job_id: str):
        with state.lock:
            record = state.jobs.get(job_id)
            if record is None:
                raise HTTPException(404, "unknown job id")
            if record.state != "done":
                raise HTTPException(409, f"job is {record.state}, not done")
            payload = record.output
        return Response(content=payload, media_type="application/vnd.android.package-archive")

    if config.portal_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # Mounted last so the /api routes always win.
        app.mount("/", StaticFiles(directory=config.portal_dir, html=True), name="portal")

    return app


def _run_job(state: ServiceState, job_id: str, job: PatchJob) -> None:
    with state.lock:
        record = state.jobs[job_id]
        if record.state != "queued":
            return
        record.state = "running"
    try:
        output, report = engine.run_job(job)
    except Exception as exc:
        with state.lock:
            record.state = "failed"
            record.error = str(exc)
        return
    with state.lock:
        record.state = "done"
        record.report = report
        record.output = output
