"""FixtureBird: a small synthetic Android app used as a patching target.

Stands in for a real social app at desk scale: a manifest, four layout
files (one containing a "stories" strip and a notification badge, the
two distractions the bundled patches remove), and a minimal DEX whose
string table carries location-API method names and a fake click-listener
registration for byte-mask patches to hit.

Everything is generated deterministically, so archives built from it are
byte-stable across runs.
"""

from __future__ import annotations

import hashlib
import struct

from cryptography.hazmat.primitives.asymmetric import ed25519

from . import axml, dexpatch, patches, zipkit
from .axml import ANDROID_NS_URI, DocumentBuilder, TypedValue, attr, element

PACKAGE_NAME = "org.fixture.bird"
VERSION_CODE = 150
VERSION_NAME = "1.5.0"

STORIES_BAR_ID = 0x7F0A0001
BADGE_ID = 0x7F0A0002
TIMELINE_ID = 0x7F0A0003
COMPOSE_FIELD_ID = 0x7F0A0010
COMPOSE_BUTTON_ID = 0x7F0A0011
AVATAR_ID = 0x7F0A0020

# Fake invoke sequence that "registers" the notification click listener
# inside the fixture DEX; 0x25 is the register byte masked as ?? by the
# bundled patch.
NOTIF_CLICK_SEQUENCE = bytes([0x6E, 0x20, 0x0B, 0x00, 0x25, 0x43])

MANIFEST_ENTRY = "AndroidManifest.xml"
MAIN_LAYOUT_ENTRY = "res/layout/main.xml"


def _size_attrs():
    return [
        attr("layout_width", TypedValue.int_dec(-1), ANDROID_NS_URI, axml.ATTR_LAYOUT_WIDTH),
        attr("layout_height", TypedValue.int_dec(-2), ANDROID_NS_URI, axml.ATTR_LAYOUT_HEIGHT),
    ]


def _id_attr(resource_id: int):
    return attr("id", TypedValue.reference(resource_id), ANDROID_NS_URI, axml.ATTR_ID)


def manifest_doc() -> axml.AxmlDocument:
    builder = DocumentBuilder(utf8=False)
    builder.namespace("android", ANDROID_NS_URI)
    return builder.root(
        "manifest",
        attrs=[
            attr("versionCode", TypedValue.int_dec(VERSION_CODE), ANDROID_NS_URI, axml.ATTR_VERSION_CODE),
            attr("versionName", VERSION_NAME, ANDROID_NS_URI, axml.ATTR_VERSION_NAME),
            attr("package", PACKAGE_NAME),
        ],
        children=[
            element(
                "uses-permission",
                [attr("name", "android.permission.INTERNET", ANDROID_NS_URI, axml.ATTR_NAME)],
            ),
            element(
                "uses-permission",
                [attr("name", "android.permission.ACCESS_FINE_LOCATION", ANDROID_NS_URI, axml.ATTR_NAME)],
            ),
            element(
                "application",
                [attr("name", ".BirdApp", ANDROID_NS_URI, axml.ATTR_NAME)],
                [
                    element(
                        "activity",
                        [attr("name", ".MainActivity", ANDROID_NS_URI, axml.ATTR_NAME)],
                        [
                            element(
                                "intent-filter",
                                [],
                                [
                                    element(
                                        "action",
                                        [
                                            attr(
                                                "name",
                                                "android.intent.action.MAIN",
                                                ANDROID_NS_URI,
                                                axml.ATTR_NAME,
                                            )
                                        ],
                                    )
                                ],
                            )
                        ],
                    )
                ],
            ),
        ],
    )


def main_layout_doc() -> axml.AxmlDocument:
    """Home screen: stories strip (4 elements), timeline, badge. 7 total."""
    builder = DocumentBuilder(utf8=True)
    builder.namespace("android", ANDROID_NS_URI)
    return builder.root(
        "LinearLayout",
        attrs=_size_attrs(),
        children=[
            element(
                "FrameLayout",
                [_id_attr(STORIES_BAR_ID), *_size_attrs()],
                [
                    element("ImageView", _size_attrs()),
                    element(
                        "TextView",
                        [attr("text", "Stories", ANDROID_NS_URI, axml.ATTR_TEXT), *_size_attrs()],
                    ),
                    element("View", _size_attrs()),
                ],
            ),
            element("ListView", [_id_attr(TIMELINE_ID), *_size_attrs()]),
            element(
                "TextView",
                [
                    _id_attr(BADGE_ID),
                    attr("text", "3", ANDROID_NS_URI, axml.ATTR_TEXT),
                    *_size_attrs(),
                ],
            ),
        ],
    )


def compose_layout_doc() -> axml.AxmlDocument:
    builder = DocumentBuilder(utf8=True)
    builder.namespace("android", ANDROID_NS_URI)
    return builder.root(
        "LinearLayout",
        attrs=_size_attrs(),
        children=[
            element("EditText", [_id_attr(COMPOSE_FIELD_ID), *_size_attrs()]),
            element(
                "Button",
                [
                    _id_attr(COMPOSE_BUTTON_ID),
                    attr("text", "Post", ANDROID_NS_URI, axml.ATTR_TEXT),
                    *_size_attrs(),
                ],
            ),
        ],
    )


def settings_layout_doc() -> axml.AxmlDocument:
    builder = DocumentBuilder(utf8=True)
    builder.namespace("android", ANDROID_NS_URI)
    return builder.root(
        "LinearLayout",
        attrs=_size_attrs(),
        children=[
            element("CheckBox", [attr("text", "Dark mode", ANDROID_NS_URI, axml.ATTR_TEXT), *_size_attrs()]),
            element("CheckBox", [attr("text", "Data saver", ANDROID_NS_URI, axml.ATTR_TEXT), *_size_attrs()]),
            element("TextView", [attr("text", "About", ANDROID_NS_URI, axml.ATTR_TEXT), *_size_attrs()]),
        ],
    )


def profile_layout_doc() -> axml.AxmlDocument:
    builder = DocumentBuilder(utf8=True)
    builder.namespace("android", ANDROID_NS_URI)
    return builder.root(
        "FrameLayout",
        attrs=_size_attrs(),
        children=[
            element(
                "LinearLayout",
                _size_attrs(),
                [
                    element("ImageView", [_id_attr(AVATAR_ID), *_size_attrs()]),
                    element("TextView", [attr("text", "@birdie", ANDROID_NS_URI, axml.ATTR_TEXT), *_size_attrs()]),
                ],
            ),
            element(
                "LinearLayout",
                _size_attrs(),
                [element("TextView", [attr("text", "Bio", ANDROID_NS_URI, axml.ATTR_TEXT), *_size_attrs()])],
            ),
        ],
    )


def axml_corpus() -> dict[str, bytes]:
    """The fixture's five binary XML files, serialized."""
    return {
        MANIFEST_ENTRY: axml.serialize_axml(manifest_doc()),
        MAIN_LAYOUT_ENTRY: axml.serialize_axml(main_layout_doc()),
        "res/layout/compose.xml": axml.serialize_axml(compose_layout_doc()),
        "res/layout/settings.xml": axml.serialize_axml(settings_layout_doc()),
        "res/layout/profile.xml": axml.serialize_axml(profile_layout_doc()),
    }


def _mutf8_entry(text: str) -> bytes:
    encoded = text.encode("utf-8")
    return bytes([len(encoded)]) + encoded + b"\x00"


def fixture_dex() -> bytes:
    """Minimal DEX: valid header and digests over a synthetic string table."""
    body = bytearray()
    body += _mutf8_entry("Lorg/fixture/bird/BirdApp;")
    body += _mutf8_entry("getLatitude")
    body += _mutf8_entry("getLongitude")
    body += _mutf8_entry("onNotificationClick")
    body += _mutf8_entry("setOnClickListener")
    body += NOTIF_CLICK_SEQUENCE
    body += bytes([0xFF, 0x1D, 0xA1, 0xF2])  # brand color literal
    while len(body) % 4:
        body += b"\x00"
    total = 112 + len(body)
    header = bytearray(112)
    header[0:8] = b"dex\n035\x00"
    struct.pack_into("<II", header, 32, total, 0x70)
    struct.pack_into("<I", header, 40, 0x12345678)
    return dexpatch.repair_digests(bytes(header) + body)


def fixture_apk() -> bytes:
    """Assemble FixtureBird as an aligned, unsigned APK."""
    archive = zipkit.ApkArchive()
    for name, data in axml_corpus().items():
        archive.add_entry(name, data, method=zipkit.DEFLATED)
    archive.add_entry("classes.dex", fixture_dex(), method=zipkit.STORED)
    archive.add_entry("assets/about.txt", b"FixtureBird sample app\n", method=zipkit.STORED)
    return zipkit.write_archive(archive, align=4)


def stories_selector() -> axml.Selector:
    return axml.Selector(
        element_name="FrameLayout",
        attrs=(axml.AttrConstraint(resource_id=axml.ATTR_ID, expected=TypedValue.reference(STORIES_BAR_ID)),),
    )


def badge_selector() -> axml.Selector:
    return axml.Selector(
        element_name="TextView",
        attrs=(axml.AttrConstraint(resource_id=axml.ATTR_ID, expected=TypedValue.reference(BADGE_ID)),),
    )


# ---------------------------------------------------------------------------
# bundled patch catalog

REVIEWER_ID = "fixture-reviewer"
_REVIEWER_SEED = hashlib.sha256(b"darkstrip fixture reviewer key v1").digest()


def reviewer_private_key() -> ed25519.Ed25519PrivateKey:
    """The fixture reviewer's signing key (deterministic; tests only)."""
    return ed25519.Ed25519PrivateKey.from_private_bytes(_REVIEWER_SEED)


def trust_store() -> patches.TrustStore:
    from cryptography.hazmat.primitives import serialization

    raw = reviewer_private_key().public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return patches.TrustStore([patches.ReviewerKey(reviewer_id=REVIEWER_ID, public_key=raw)])


def _fixture_targets():
    return (patches.TargetSpec(PACKAGE_NAME, min_version_code=100, max_version_code_exclusive=200),)


def remove_stories_bar_patch() -> patches.PatchDefinition:
    return patches.PatchDefinition(
        id="remove-stories-bar",
        name="Remove stories bar",
        description="Deletes the ephemeral-stories strip from the home timeline so it no longer competes for attention.",
        author="fixture-dev",
        dark_pattern_class="interface_interference",
        mechanism="interface",
        specificity="app_specific",
        targets=_fixture_targets(),
        steps=(patches.RemoveElement(MAIN_LAYOUT_ENTRY, stories_selector()),),
    )


def hide_notification_badge_patch() -> patches.PatchDefinition:
    return patches.PatchDefinition(
        id="hide-notification-badge",
        name="Hide notification badge",
        description=(
            "Sets the notification counter's visibility to gone and rewrites the "
            "click-listener registration in the bytecode so taps on it do nothing."
        ),
        author="fixture-dev",
        dark_pattern_class="nagging",
        mechanism="control_flow",
        specificity="app_specific",
        targets=_fixture_targets(),
        steps=(
            patches.SetAttribute(
                MAIN_LAYOUT_ENTRY,
                badge_selector(),
                axml.AttrSpec(name="visibility", ns_uri=ANDROID_NS_URI, resource_id=axml.ATTR_VISIBILITY),
                TypedValue.int_dec(axml.VISIBILITY_GONE),
            ),
            patches.ByteMaskStep(
                "classes.dex",
                dexpatch.ByteMask.parse("6E 20 0B 00 ?? 43", "00 00 0B 00 ?? 43", "expect:1"),
            ),
        ),
    )


def block_location_read_patch() -> patches.PatchDefinition:
    return patches.PatchDefinition(
        id="block-location-read",
        name="Block location reads",
        description=(
            "Renames the latitude/longitude accessor strings in the bytecode with "
            "equal-length replacements. Calls fail instead of being stubbed out, "
            "which disables location features rather than faking them."
        ),
        author="fixture-dev",
        dark_pattern_class="sneaking",
        mechanism="control_flow",
        specificity="app_agnostic",
        steps=(
            patches.ReplaceString("classes*.dex", b"getLatitude", b"getLatitudX"),
            patches.ReplaceString("classes*.dex", b"getLongitude", b"getLongitudX"),
        ),
    )


def strip_location_permission_patch() -> patches.PatchDefinition:
    return patches.PatchDefinition(
        id="strip-location-permission",
        name="Strip fine-location permission",
        description="Removes the ACCESS_FINE_LOCATION request from the manifest.",
        author="fixture-dev",
        dark_pattern_class="sneaking",
        mechanism="control_flow",
        specificity="app_agnostic",
        steps=(
            patches.RemoveManifestElement(
                axml.Selector(
                    element_name="uses-permission",
                    attrs=(
                        axml.AttrConstraint(
                            resource_id=axml.ATTR_NAME,
                            expected="android.permission.ACCESS_FINE_LOCATION",
                        ),
                    ),
                )
            ),
        ),
    )


def remove_nag_popup_patch() -> patches.PatchDefinition:
    """Targets a different package; shows up as not-applicable for FixtureBird."""
    return patches.PatchDefinition(
        id="remove-nag-popup",
        name="Remove rating nag popup",
        description="Deletes the rate-us banner another app injects into every screen.",
        author="fixture-dev",
        dark_pattern_class="nagging",
        mechanism="interface",
        specificity="app_specific",
        targets=(patches.TargetSpec("com.example.other", min_version_code=1),),
        steps=(
            patches.RemoveElement("res/layout/*.xml", axml.Selector(element_name="NagBanner")),
        ),
    )


def bundled_patches(signed: bool = True) -> list[patches.PatchDefinition]:
    """The example patches shipped with the toolkit, reviewer-signed."""
    all_patches = [
        remove_stories_bar_patch(),
        hide_notification_badge_patch(),
        block_location_read_patch(),
        strip_location_permission_patch(),
        remove_nag_popup_patch(),
    ]
    if not signed:
        return all_patches
    key = reviewer_private_key()
    return [patches.sign_patch(p, REVIEWER_ID, key) for p in all_patches]


def write_catalog(directory) -> None:
    """Materialize the bundled catalog: patch files plus the trust store."""
    from pathlib import Path

    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    for patch in bundled_patches():
        (target / f"{patch.id}{patches.PATCH_FILE_SUFFIX}").write_text(
            patches.encode_patch(patch), encoding="utf-8"
        )
    (target / patches.TRUST_STORE_FILENAME).write_text(trust_store().encode(), encoding="utf-8")
