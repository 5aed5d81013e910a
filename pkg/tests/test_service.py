import time

import pytest
from fastapi.testclient import TestClient

from darkstrip import fixtures
from darkstrip.service import ServiceConfig, create_app
from conftest import SEED


@pytest.fixture()
def client(catalog_dir, tmp_path, seeded_identity):
    identity_path = tmp_path / "service-identity.pem"
    identity_path.write_bytes(seeded_identity.to_pem())
    config = ServiceConfig(
        catalog_dir=catalog_dir,
        upload_limit=4 * 1024 * 1024,
        artifact_ttl=3600.0,
        identity_path=identity_path,
    )
    with TestClient(create_app(config)) as test_client:
        yield test_client


def upload_fixture(client, data):
    return client.post(
        "/api/apks", content=data, headers={"content-type": "application/octet-stream"}
    )


def wait_for_job(client, job_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        record = client.get(f"/api/jobs/{job_id}").json()
        if record["state"] in ("done", "failed"):
            return record
        time.sleep(0.02)
    raise AssertionError("job did not finish in time")


class TestUpload:
    def test_fixture_upload_extracts_meta(self, client, fixture_apk_bytes):
        response = upload_fixture(client, fixture_apk_bytes)
        assert response.status_code == 200
        body = response.json()
        assert body["app_meta"] == {"package_name": "org.fixture.bird", "version_code": 150}
        assert body["apk_id"]

    def test_text_file_rejected(self, client):
        response = upload_fixture(client, b"this is not an apk")
        assert response.status_code == 422

    def test_oversize_upload_rejected(self, client):
        response = upload_fixture(client, b"\x00" * (4 * 1024 * 1024 + 1))
        assert response.status_code == 413


class TestListPatches:
    def test_annotated_catalog(self, client, fixture_apk_bytes):
        apk_id = upload_fixture(client, fixture_apk_bytes).json()["apk_id"]
        response = client.get(f"/api/apks/{apk_id}/patches")
        assert response.status_code == 200
        patches = {p["id"]: p for p in response.json()["patches"]}
        assert patches["remove-stories-bar"]["applicable"] is True
        assert patches["remove-stories-bar"]["verified"] is True
        assert patches["remove-nag-popup"]["applicable"] is False
        assert patches["remove-nag-popup"]["not_applicable_reason"]

    def test_unknown_apk_id(self, client):
        assert client.get("/api/apks/nope/patches").status_code == 404

    def test_empty_catalog(self, tmp_path, seeded_identity):
        identity_path = tmp_path / "i.pem"
        identity_path.write_bytes(seeded_identity.to_pem())
        empty = tmp_path / "empty-catalog"
        empty.mkdir()
        config = ServiceConfig(catalog_dir=empty, identity_path=identity_path)
        with TestClient(create_app(config)) as client:
            apk_id = upload_fixture(client, fixtures.fixture_apk()).json()["apk_id"]
            assert client.get(f"/api/apks/{apk_id}/patches").json() == {"patches": []}


class TestJobs:
    def test_full_flow_matches_cli_output(self, client, fixture_apk_bytes, tmp_path, catalog_dir):
        apk_id = upload_fixture(client, fixture_apk_bytes).json()["apk_id"]
        response = client.post(
            "/api/jobs",
            json={
                "apk_id": apk_id,
                "patch_ids": ["remove-stories-bar", "hide-notification-badge"],
                "policy": {"require_verified": True},
            },
        )
        assert response.status_code == 200
        job_id = response.json()["job_id"]
        record = wait_for_job(client, job_id)
        assert record["state"] == "done", record.get("error")
        assert record["report"]["patches"][0]["status"] == "applied"
        artifact = client.get(f"/api/jobs/{job_id}/artifact")
        assert artifact.status_code == 200

        # Byte-identical to a CLI run with the same seeded identity.
        from click.testing import CliRunner

        from darkstrip.cli import main

        runner = CliRunner()
        apk_path = tmp_path / "in.apk"
        apk_path.write_bytes(fixture_apk_bytes)
        identity_path = tmp_path / "cli-identity.pem"
        result = runner.invoke(
            main, ["keygen", "--subject", "Fixture User", "--out", str(identity_path), "--seed", SEED.hex()]
        )
        assert result.exit_code == 0
        out_path = tmp_path / "cli-out.apk"
        result = runner.invoke(
            main,
            [
                "patch",
                str(apk_path),
                "--catalog",
                str(catalog_dir),
                "--apply",
                "remove-stories-bar,hide-notification-badge",
                "--identity",
                str(identity_path),
                "--out",
                str(out_path),
                "--require-verified",
            ],
        )
        assert result.exit_code == 0, result.output
        assert artifact.content == out_path.read_bytes()

    def test_download_before_done_is_conflict(self, client, fixture_apk_bytes, monkeypatch):
        # Stall the engine so the job is still queued/running at download time.
        import darkstrip.service as service_module

        real_run_job = service_module.engine.run_job

        def slow_run_job(job):
            time.sleep(0.4)
            return real_run_job(job)

        monkeypatch.setattr(service_module.engine, "run_job", slow_run_job)
        apk_id = upload_fixture(client, fixture_apk_bytes).json()["apk_id"]
        job_id = client.post(
            "/api/jobs", json={"apk_id": apk_id, "patch_ids": ["remove-stories-bar"]}
        ).json()["job_id"]
        response = client.get(f"/api/jobs/{job_id}/artifact")
        assert response.status_code == 409
        record = wait_for_job(client, job_id)
        assert record["state"] == "done"

    def test_unknown_patch_id(self, client, fixture_apk_bytes):
        apk_id = upload_fixture(client, fixture_apk_bytes).json()["apk_id"]
        response = client.post("/api/jobs", json={"apk_id": apk_id, "patch_ids": ["nope"]})
        assert response.status_code == 404

    def test_unknown_job_id(self, client):
        assert client.get("/api/jobs/nope").status_code == 404
        assert client.get("/api/jobs/nope/artifact").status_code == 404

    def test_unknown_apk_for_job(self, client):
        response = client.post("/api/jobs", json={"apk_id": "nope", "patch_ids": []})
        assert response.status_code == 404

    def test_policy_failure_yields_failed_job(self, client, fixture_apk_bytes, tmp_path, catalog_dir, seeded_identity):
        # An unsigned catalog under require_verified produces a failed job.
        import darkstrip.patches as patchlib

        bare = tmp_path / "bare"
        bare.mkdir()
        for patch in fixtures.bundled_patches(signed=False):
            (bare / f"{patch.id}{patchlib.PATCH_FILE_SUFFIX}").write_text(patchlib.encode_patch(patch))
        identity_path = tmp_path / "i.pem"
        identity_path.write_bytes(seeded_identity.to_pem())
        config = ServiceConfig(catalog_dir=bare, identity_path=identity_path)
        with TestClient(create_app(config)) as bare_client:
            apk_id = upload_fixture(bare_client, fixture_apk_bytes).json()["apk_id"]
            job_id = bare_client.post(
                "/api/jobs",
                json={
                    "apk_id": apk_id,
                    "patch_ids": ["remove-stories-bar"],
                    "policy": {"require_verified": True},
                },
            ).json()["job_id"]
            record = wait_for_job(bare_client, job_id)
            assert record["state"] == "failed"
            assert "not verified" in record["error"]
            assert bare_client.get(f"/api/jobs/{job_id}/artifact").status_code == 409

    def test_get_job_is_idempotent_and_terminal(self, client, fixture_apk_bytes):
        apk_id = upload_fixture(client, fixture_apk_bytes).json()["apk_id"]
        job_id = client.post(
            "/api/jobs", json={"apk_id": apk_id, "patch_ids": ["remove-stories-bar"]}
        ).json()["job_id"]
        record = wait_for_job(client, job_id)
        again = client.get(f"/api/jobs/{job_id}").json()
        assert again == record

    def test_concurrent_jobs_do_not_interleave(self, client, fixture_apk_bytes):
        apk_id = upload_fixture(client, fixture_apk_bytes).json()["apk_id"]
        job_a = client.post(
            "/api/jobs", json={"apk_id": apk_id, "patch_ids": ["remove-stories-bar"]}
        ).json()["job_id"]
        job_b = client.post(
            "/api/jobs", json={"apk_id": apk_id, "patch_ids": ["block-location-read"]}
        ).json()["job_id"]
        assert job_a != job_b
        record_a = wait_for_job(client, job_a)
        record_b = wait_for_job(client, job_b)
        assert record_a["state"] == record_b["state"] == "done"
        bytes_a = client.get(f"/api/jobs/{job_a}/artifact").content
        bytes_b = client.get(f"/api/jobs/{job_b}/artifact").content
        assert bytes_a != bytes_b

    def test_artifact_ttl_purges_uploads(self, tmp_path, catalog_dir, seeded_identity):
        identity_path = tmp_path / "i.pem"
        identity_path.write_bytes(seeded_identity.to_pem())
        config = ServiceConfig(catalog_dir=catalog_dir, artifact_ttl=0.05, identity_path=identity_path)
        with TestClient(create_app(config)) as client:
            apk_id = upload_fixture(client, fixtures.fixture_apk()).json()["apk_id"]
            time.sleep(0.2)
            assert client.get(f"/api/apks/{apk_id}/patches").status_code == 404


class TestPortalHosting:
    def test_portal_statics_served_when_configured(self, tmp_path, catalog_dir, seeded_identity):
        identity_path = tmp_path / "i.pem"
        identity_path.write_bytes(seeded_identity.to_pem())
        portal = tmp_path / "portal"
        portal.mkdir()
        (portal / "index.html").write_text("<html><body>portal shell</body></html>")
        config = ServiceConfig(catalog_dir=catalog_dir, identity_path=identity_path, portal_dir=portal)
        with TestClient(create_app(config)) as client:
            page = client.get("/")
            assert page.status_code == 200
            assert "portal shell" in page.text
            # API routes still win over the static mount.
            assert client.get("/api/jobs/nope").status_code == 404
            assert upload_fixture(client, fixtures.fixture_apk()).status_code == 200
