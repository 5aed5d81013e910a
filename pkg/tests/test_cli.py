import hashlib

import pytest
from click.testing import CliRunner

from darkstrip import fixtures, signer, zipkit
from darkstrip.cli import main
from conftest import SEED


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def workspace(tmp_path, fixture_apk_bytes, catalog_dir):
    apk = tmp_path / "fixturebird.apk"
    apk.write_bytes(fixture_apk_bytes)
    return {"apk": apk, "catalog": catalog_dir, "tmp": tmp_path}


def make_identity(runner, tmp_path, seed=SEED.hex()):
    path = tmp_path / "identity.pem"
    args = ["keygen", "--subject", "CLI User", "--out", str(path)]
    if seed:
        args += ["--seed", seed]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return path


class TestKeygen:
    def test_writes_loadable_identity(self, runner, tmp_path):
        path = make_identity(runner, tmp_path)
        identity = signer.SigningIdentity.from_pem(path.read_bytes())
        assert identity.private_key.key_size == 2048

    def test_seeded_keygen_is_reproducible(self, runner, tmp_path):
        first = make_identity(runner, tmp_path)
        data = first.read_bytes()
        second = tmp_path / "second.pem"
        result = runner.invoke(
            main, ["keygen", "--subject", "CLI User", "--out", str(second), "--seed", SEED.hex()]
        )
        assert result.exit_code == 0
        assert second.read_bytes() == data

    def test_bad_seed_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(
            main, ["keygen", "--subject", "x", "--out", str(tmp_path / "i.pem"), "--seed", "zz"]
        )
        assert result.exit_code == 2


class TestInspect:
    def test_shows_meta_and_entries(self, runner, workspace):
        result = runner.invoke(main, ["inspect", str(workspace["apk"])])
        assert result.exit_code == 0, result.output
        assert "org.fixture.bird" in result.output
        assert "150" in result.output
        assert "classes.dex" in result.output

    def test_non_apk_is_io_error(self, runner, tmp_path):
        bogus = tmp_path / "file.txt"
        bogus.write_text("not an apk")
        result = runner.invoke(main, ["inspect", str(bogus)])
        assert result.exit_code == 5


class TestPatchesList:
    def test_lists_catalog_with_verification(self, runner, workspace):
        result = runner.invoke(main, ["patches", "list", "--catalog", str(workspace["catalog"])])
        assert result.exit_code == 0, result.output
        assert "remove-stories-bar" in result.output
        assert "yes" in result.output

    def test_applicability_column_with_apk(self, runner, workspace):
        result = runner.invoke(
            main,
            ["patches", "list", "--catalog", str(workspace["catalog"]), "--apk", str(workspace["apk"])],
        )
        assert result.exit_code == 0, result.output
        lines = {line.split()[0]: line for line in result.output.splitlines() if line.startswith(("remove", "hide", "block", "strip"))}
        assert lines["remove-stories-bar"].rstrip().endswith("yes")
        assert "no (" in lines["remove-nag-popup"]


class TestPatchCommand:
    def test_case_study_run(self, runner, workspace):
        identity = make_identity(runner, workspace["tmp"])
        out = workspace["tmp"] / "patched.apk"
        report = workspace["tmp"] / "report.json"
        result = runner.invoke(
            main,
            [
                "patch",
                str(workspace["apk"]),
                "--catalog",
                str(workspace["catalog"]),
                "--apply",
                "remove-stories-bar,hide-notification-badge",
                "--identity",
                str(identity),
                "--out",
                str(out),
                "--report",
                str(report),
            ],
        )
        assert result.exit_code == 0, result.output
        assert result.output.count(": applied") >= 2
        assert out.exists() and report.exists()
        verify = runner.invoke(main, ["verify", str(out)])
        assert verify.exit_code == 0, verify.output

    def test_require_verified_rejects_unsigned_patch(self, runner, workspace, tmp_path):
        # A catalog whose patches carry no signatures.
        bare = tmp_path / "bare-catalog"
        bare.mkdir()
        from darkstrip import patches as patchlib

        for patch in fixtures.bundled_patches(signed=False):
            (bare / f"{patch.id}{patchlib.PATCH_FILE_SUFFIX}").write_text(patchlib.encode_patch(patch))
        identity = make_identity(runner, workspace["tmp"])
        result = runner.invoke(
            main,
            [
                "patch",
                str(workspace["apk"]),
                "--catalog",
                str(bare),
                "--apply",
                "remove-stories-bar",
                "--identity",
                str(identity),
                "--out",
                str(workspace["tmp"] / "out.apk"),
                "--require-verified",
            ],
        )
        assert result.exit_code == 3
        assert not (workspace["tmp"] / "out.apk").exists()

    def test_unknown_patch_id_is_usage_error(self, runner, workspace):
        identity = make_identity(runner, workspace["tmp"])
        result = runner.invoke(
            main,
            [
                "patch",
                str(workspace["apk"]),
                "--catalog",
                str(workspace["catalog"]),
                "--apply",
                "no-such-patch",
                "--identity",
                str(identity),
                "--out",
                str(workspace["tmp"] / "out.apk"),
            ],
        )
        assert result.exit_code == 2

    def test_app_specific_miss_is_step_failure(self, runner, workspace, tmp_path):
        import dataclasses

        from darkstrip import patches as patchlib
        from darkstrip.axml import Selector

        stale = dataclasses.replace(
            fixtures.remove_stories_bar_patch(),
            id="stale-patch",
            steps=(
                patchlib.RemoveElement("res/layout/main.xml", Selector(element_name="Gone")),
            ),
        )
        stale_dir = tmp_path / "stale-catalog"
        stale_dir.mkdir()
        (stale_dir / f"stale-patch{patchlib.PATCH_FILE_SUFFIX}").write_text(patchlib.encode_patch(stale))
        identity = make_identity(runner, workspace["tmp"])
        result = runner.invoke(
            main,
            [
                "patch",
                str(workspace["apk"]),
                "--catalog",
                str(stale_dir),
                "--apply",
                "stale-patch",
                "--identity",
                str(identity),
                "--out",
                str(workspace["tmp"] / "out.apk"),
            ],
        )
        assert result.exit_code == 4


class TestVerifyCommand:
    def test_verify_tampered_apk_names_entry(self, runner, workspace):
        identity = make_identity(runner, workspace["tmp"])
        out = workspace["tmp"] / "patched.apk"
        run = runner.invoke(
            main,
            [
                "patch",
                str(workspace["apk"]),
                "--catalog",
                str(workspace["catalog"]),
                "--apply",
                "remove-stories-bar",
                "--identity",
                str(identity),
                "--out",
                str(out),
            ],
        )
        assert run.exit_code == 0, run.output
        archive = zipkit.open_archive(out.read_bytes())
        data = bytearray(archive.read_entry("classes.dex"))
        data[-1] ^= 0xFF
        archive.replace_entry("classes.dex", bytes(data))
        out.write_bytes(zipkit.write_archive(archive, align=4))
        result = runner.invoke(main, ["verify", str(out)])
        assert result.exit_code == 4
        assert "classes.dex" in result.output

    def test_fingerprint_check(self, runner, workspace):
        identity_path = make_identity(runner, workspace["tmp"])
        identity = signer.SigningIdentity.from_pem(identity_path.read_bytes())
        out = workspace["tmp"] / "patched.apk"
        runner.invoke(
            main,
            [
                "patch",
                str(workspace["apk"]),
                "--catalog",
                str(workspace["catalog"]),
                "--apply",
                "remove-stories-bar",
                "--identity",
                str(identity_path),
                "--out",
                str(out),
            ],
        )
        ok = runner.invoke(main, ["verify", str(out), "--fingerprint", identity.fingerprint])
        assert ok.exit_code == 0
        bad = runner.invoke(main, ["verify", str(out), "--fingerprint", "ab" * 32])
        assert bad.exit_code == 4


class TestMakeFixture:
    def test_writes_apk_and_catalog(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["make-fixture", "--out", str(tmp_path / "fb.apk"), "--catalog", str(tmp_path / "cat")],
        )
        assert result.exit_code == 0, result.output
        assert hashlib.sha256((tmp_path / "fb.apk").read_bytes()).hexdigest() == hashlib.sha256(
            fixtures.fixture_apk()
        ).hexdigest()
        assert (tmp_path / "cat" / "trust-store.json").exists()
