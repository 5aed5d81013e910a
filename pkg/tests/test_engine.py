import dataclasses
import struct

import pytest

from darkstrip import axml, engine, fixtures, patches, signer, zipkit
from darkstrip.engine import (
    ConflictsDetected,
    JobPolicy,
    ManifestMissing,
    ManifestUnparseable,
    PatchJob,
    PolicyViolation,
    StepFailed,
    encode_report,
    extract_app_meta,
    run_job,
)
from oracles import adler32_reference, sha1_reference


def job_for(apk, patch_list, identity, **policy):
    return PatchJob(
        apk=apk,
        patches=patch_list,
        identity=identity,
        policy=JobPolicy(**policy),
        trust_store=fixtures.trust_store(),
    )


class TestExtractAppMeta:
    def test_fixture_meta(self, fixture_archive):
        meta = extract_app_meta(fixture_archive)
        assert (meta.package_name, meta.version_code) == ("org.fixture.bird", 150)

    def test_version_code_attribute_id(self):
        assert axml.ATTR_VERSION_CODE == 0x0101021B

    def test_missing_manifest(self):
        archive = zipkit.ApkArchive()
        archive.add_entry("classes.dex", b"x")
        with pytest.raises(ManifestMissing):
            extract_app_meta(archive)

    def test_unparseable_manifest(self):
        archive = zipkit.ApkArchive()
        archive.add_entry("AndroidManifest.xml", b"\x00" * 64)
        with pytest.raises(ManifestUnparseable):
            extract_app_meta(archive)


class TestRunJob:
    def test_case_study_patches(self, fixture_apk_bytes, seeded_identity):
        patch_list = [fixtures.remove_stories_bar_patch(), fixtures.hide_notification_badge_patch()]
        output, report = run_job(job_for(fixture_apk_bytes, patch_list, seeded_identity))
        patched = zipkit.open_archive(output)
        doc = axml.parse_axml(patched.read_entry("res/layout/main.xml"))
        assert axml.find_elements(doc, fixtures.stories_selector()) == []
        (badge,) = axml.find_elements(doc, fixtures.badge_selector())
        visibility = axml.find_attribute(doc, badge, resource_id=axml.ATTR_VISIBILITY)
        assert (visibility.type_code, visibility.data) == (axml.TYPE_INT_DEC, 2)
        # Element count dropped by exactly the stories subtree size.
        original = axml.parse_axml(zipkit.open_archive(fixture_apk_bytes).read_entry("res/layout/main.xml"))
        assert original.count_elements() - doc.count_elements() == 4
        assert signer.verify_apk(patched).verified
        assert [p.status for p in report.patches] == ["applied", "applied"]

    def test_byte_mask_rewrote_listener_and_digests_repaired(self, fixture_apk_bytes, seeded_identity):
        output, _ = run_job(
            job_for(fixture_apk_bytes, [fixtures.hide_notification_badge_patch()], seeded_identity)
        )
        dex = zipkit.open_archive(output).read_entry("classes.dex")
        assert fixtures.NOTIF_CLICK_SEQUENCE not in dex
        assert bytes([0x00, 0x00, 0x0B, 0x00, 0x25, 0x43]) in dex
        assert dex[12:32] == sha1_reference(dex[32:])
        assert struct.unpack_from("<I", dex, 8)[0] == adler32_reference(dex[12:])

    def test_empty_patch_list_is_near_identity(self, fixture_apk_bytes, seeded_identity):
        output, report = run_job(job_for(fixture_apk_bytes, [], seeded_identity))
        before = zipkit.open_archive(fixture_apk_bytes)
        after = zipkit.open_archive(output)
        signature_names = {e.name for e in after.entries} - {e.name for e in before.entries}
        assert signature_names == {
            "META-INF/MANIFEST.MF",
            "META-INF/CERT.SF",
            "META-INF/CERT.RSA",
        }
        for entry in before.entries:
            assert after.read_entry(entry.name) == entry.data
        assert report.patches == []

    def test_unverified_patch_under_require_verified(self, fixture_apk_bytes, seeded_identity):
        unsigned = fixtures.remove_stories_bar_patch()
        with pytest.raises(PolicyViolation):
            run_job(job_for(fixture_apk_bytes, [unsigned], seeded_identity, require_verified=True))

    def test_verified_patch_passes_policy(self, fixture_apk_bytes, seeded_identity):
        signed = patches.sign_patch(
            fixtures.remove_stories_bar_patch(), fixtures.REVIEWER_ID, fixtures.reviewer_private_key()
        )
        output, report = run_job(
            job_for(fixture_apk_bytes, [signed], seeded_identity, require_verified=True)
        )
        assert report.patches[0].status == "applied"

    def test_tampered_signed_patch_fails_policy(self, fixture_apk_bytes, seeded_identity):
        signed = patches.sign_patch(
            fixtures.remove_stories_bar_patch(), fixtures.REVIEWER_ID, fixtures.reviewer_private_key()
        )
        tampered = dataclasses.replace(signed, description=signed.description + " ")
        with pytest.raises(PolicyViolation):
            run_job(job_for(fixture_apk_bytes, [tampered], seeded_identity, require_verified=True))

    def test_determinism_across_runs(self, fixture_apk_bytes, seeded_identity):
        patch_list = fixtures.bundled_patches()
        first_out, first_report = run_job(job_for(fixture_apk_bytes, patch_list, seeded_identity))
        second_out, second_report = run_job(job_for(fixture_apk_bytes, patch_list, seeded_identity))
        assert first_out == second_out
        assert encode_report(first_report) == encode_report(second_report)

    def test_not_applicable_patch_is_skipped(self, fixture_apk_bytes, seeded_identity):
        output, report = run_job(
            job_for(fixture_apk_bytes, [fixtures.remove_nag_popup_patch()], seeded_identity)
        )
        assert report.patches[0].status.startswith("skipped")
        assert report.patches[0].steps == []
        assert signer.verify_apk(zipkit.open_archive(output)).verified

    def test_agnostic_patch_with_no_match_is_skipped(self, seeded_identity):
        # An app without any location APIs: the agnostic patch must
        # tolerate the absent feature instead of failing the job.
        archive = zipkit.ApkArchive()
        for name, data in fixtures.axml_corpus().items():
            archive.add_entry(name, data)
        apk = zipkit.write_archive(archive, align=4)
        output, report = run_job(job_for(apk, [fixtures.block_location_read_patch()], seeded_identity))
        assert report.patches[0].status.startswith("skipped")
        assert all(s.status == "skipped" for s in report.patches[0].steps)
        assert signer.verify_apk(zipkit.open_archive(output)).verified

    def test_app_specific_no_match_aborts(self, fixture_apk_bytes, seeded_identity):
        broken = dataclasses.replace(
            fixtures.remove_stories_bar_patch(),
            steps=(
                patches.RemoveElement(
                    "res/layout/main.xml", axml.Selector(element_name="DoesNotExist")
                ),
            ),
        )
        with pytest.raises(StepFailed):
            run_job(job_for(fixture_apk_bytes, [broken], seeded_identity))

    def test_conflict_abort_policy(self, fixture_apk_bytes, seeded_identity):
        first = fixtures.remove_stories_bar_patch()
        second = dataclasses.replace(first, id="remove-stories-bar-again")
        with pytest.raises(ConflictsDetected):
            run_job(
                job_for(fixture_apk_bytes, [first, second], seeded_identity, on_conflict="abort")
            )

    def test_conflict_warn_policy_records_conflicts(self, fixture_apk_bytes, seeded_identity):
        # Restyle the stories bar, then remove it: the steps overlap on the
        # same node, but applied in order both succeed under warn.
        restyle = dataclasses.replace(
            fixtures.remove_stories_bar_patch(),
            id="restyle-stories-bar",
            steps=(
                patches.SetAttribute(
                    fixtures.MAIN_LAYOUT_ENTRY,
                    fixtures.stories_selector(),
                    axml.AttrSpec(
                        name="visibility", ns_uri=axml.ANDROID_NS_URI, resource_id=axml.ATTR_VISIBILITY
                    ),
                    axml.TypedValue.int_dec(axml.VISIBILITY_GONE),
                ),
            ),
        )
        remove = fixtures.remove_stories_bar_patch()
        output, report = run_job(job_for(fixture_apk_bytes, [restyle, remove], seeded_identity))
        assert report.conflicts
        assert [p.status for p in report.patches] == ["applied", "applied"]

    def test_duplicate_removal_aborts_even_under_warn(self, fixture_apk_bytes, seeded_identity):
        first = fixtures.remove_stories_bar_patch()
        second = dataclasses.replace(first, id="remove-stories-bar-again")
        with pytest.raises(StepFailed):
            run_job(job_for(fixture_apk_bytes, [first, second], seeded_identity))

    def test_manifest_permission_removal(self, fixture_apk_bytes, seeded_identity):
        output, report = run_job(
            job_for(fixture_apk_bytes, [fixtures.strip_location_permission_patch()], seeded_identity)
        )
        doc = axml.parse_axml(zipkit.open_archive(output).read_entry("AndroidManifest.xml"))
        sel = axml.Selector(
            element_name="uses-permission",
            attrs=(
                axml.AttrConstraint(
                    resource_id=axml.ATTR_NAME,
                    expected="android.permission.ACCESS_FINE_LOCATION",
                ),
            ),
        )
        assert axml.find_elements(doc, sel) == []
        # The INTERNET permission survives.
        assert doc.count_elements() == 6

    def test_patch_order_is_listed_order(self, fixture_apk_bytes, seeded_identity):
        patch_list = [fixtures.hide_notification_badge_patch(), fixtures.remove_stories_bar_patch()]
        _, report = run_job(job_for(fixture_apk_bytes, patch_list, seeded_identity))
        assert [p.patch_id for p in report.patches] == [
            "hide-notification-badge",
            "remove-stories-bar",
        ]

    def test_output_self_verifies(self, fixture_apk_bytes, seeded_identity):
        output, report = run_job(
            job_for(fixture_apk_bytes, fixtures.bundled_patches(), seeded_identity)
        )
        result = signer.verify_apk(zipkit.open_archive(output))
        assert result.verified
        assert result.fingerprint == report.signer_fingerprint

    def test_report_round_trips_as_json(self, fixture_apk_bytes, seeded_identity):
        import json

        _, report = run_job(
            job_for(fixture_apk_bytes, [fixtures.remove_stories_bar_patch()], seeded_identity)
        )
        parsed = json.loads(encode_report(report))
        assert parsed["app"]["package_name"] == "org.fixture.bird"
        assert parsed["patches"][0]["id"] == "remove-stories-bar"
        assert parsed["patches"][0]["steps"][0]["count"] == 1
