import hashlib
from pathlib import Path

import pytest
from hypothesis import settings

from tcpuzzle.wire import read_hex_blocks

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("ci", max_examples=200, deadline=None, derandomize=True)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def golden():
    return read_hex_blocks(FIXTURES / "golden_options.hex")


@pytest.fixture
def golden_path():
    return FIXTURES / "golden_options.hex"


def ref_sha256(data: bytes) -> bytes:
    """Reference digest from a second implementation, used as a test oracle."""
    from cryptography.hazmat.primitives import hashes

    h = hashes.Hash(hashes.SHA256())
    h.update(data)
    return h.finalize()


@pytest.fixture(scope="session")
def sha_oracle():
    try:
        import cryptography  # noqa: F401
    except ImportError:  # fall back to the stdlib
        return lambda b: hashlib.sha256(b).digest()
    return ref_sha256
