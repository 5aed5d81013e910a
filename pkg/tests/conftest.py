import pytest

from darkstrip import fixtures, signer, zipkit

SEED = bytes.fromhex("00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff")


@pytest.fixture(scope="session")
def seeded_identity():
    # Deterministic RSA generation is slow enough to share across the suite.
    return signer.generate_identity("Fixture User", rng_seed=SEED)


@pytest.fixture(scope="session")
def fixture_apk_bytes():
    return fixtures.fixture_apk()


@pytest.fixture()
def fixture_archive(fixture_apk_bytes):
    return zipkit.open_archive(fixture_apk_bytes)


@pytest.fixture(scope="session")
def catalog_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("catalog")
    fixtures.write_catalog(path)
    return path
