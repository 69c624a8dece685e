"""Crypto primitives: golden vectors, round trips, mutation resistance,
canonical JSON determinism."""

import random

import pytest

from aip import crypto
from aip.errors import InvalidSeedLength, MalformedEncoding, NonCanonicalizable

# Golden vectors pinned from an independent RFC 8032 reference implementation
# (pure-Python scalar math, no shared code with the production path).
ZERO_SEED_PUB = "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29"
RFC8032_TEST1_SEED = "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"
RFC8032_TEST1_PUB = "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
RFC8032_TEST1_SIG = (
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
    "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
)


def test_keygen_zero_seed_golden_vector():
    kp = crypto.keygen(bytes(32))
    assert kp.public.hex() == ZERO_SEED_PUB


def test_keygen_rfc8032_test1():
    kp = crypto.keygen(bytes.fromhex(RFC8032_TEST1_SEED))
    assert kp.public.hex() == RFC8032_TEST1_PUB
    # TEST1 signs the empty message
    assert crypto.sign(kp.secret, b"").hex() == RFC8032_TEST1_SIG
    assert crypto.verify(kp.public, b"", bytes.fromhex(RFC8032_TEST1_SIG))


def test_keygen_random_is_distinct():
    assert crypto.keygen().public != crypto.keygen().public


def test_keygen_bad_seed_length():
    with pytest.raises(InvalidSeedLength):
        crypto.keygen(b"\x00" * 31)
    with pytest.raises(InvalidSeedLength):
        crypto.keygen(b"\x00" * 33)


def test_sign_verify_roundtrip_and_mutations():
    rng = random.Random(1)
    for _ in range(1000):
        kp = crypto.keygen(rng.randbytes(32))
        message = rng.randbytes(rng.randrange(1, 64))
        sig = crypto.sign(kp.secret, message)
        assert crypto.verify(kp.public, message, sig)

        # single-bit mutation of the message
        mutated = bytearray(message)
        bit = rng.randrange(len(mutated) * 8)
        mutated[bit // 8] ^= 1 << (bit % 8)
        assert not crypto.verify(kp.public, bytes(mutated), sig)

        # single-bit mutation of the signature
        bad_sig = bytearray(sig)
        bit = rng.randrange(len(bad_sig) * 8)
        bad_sig[bit // 8] ^= 1 << (bit % 8)
        assert not crypto.verify(kp.public, message, bytes(bad_sig))


def test_verify_unrelated_key():
    a = crypto.keygen(bytes(32))
    b = crypto.keygen(bytes([1] * 32))
    sig = crypto.sign(a.secret, b"msg")
    assert not crypto.verify(b.public, b"msg", sig)


def test_verify_never_raises():
    kp = crypto.keygen(bytes(32))
    assert crypto.verify(b"short", b"msg", b"sig") is False
    assert crypto.verify(kp.public, b"msg", b"not 64 bytes") is False


def test_sha256_known_vectors():
    assert crypto.sha256(b"").hex() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert crypto.sha256_hex(b"abc") == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


# ---------------------------------------------------------------------------
# base64url
# ---------------------------------------------------------------------------

def test_b64url_roundtrip():
    rng = random.Random(2)
    for _ in range(500):
        data = rng.randbytes(rng.randrange(0, 80))
        encoded = crypto.b64url_encode(data)
        assert "=" not in encoded and "+" not in encoded and "/" not in encoded
        assert crypto.b64url_decode(encoded) == data


@pytest.mark.parametrize("bad", ["!!", "ab=", "a", "a b", "π"])
def test_b64url_rejects_malformed(bad):
    with pytest.raises(MalformedEncoding):
        crypto.b64url_decode(bad)


def test_b64url_rejects_noncanonical_trailing_bits():
    # "eQ" and "eR" would decode to the same byte under a lax decoder; only
    # the canonical spelling is accepted.
    assert crypto.b64url_decode("eQ") == b"y"
    with pytest.raises(MalformedEncoding):
        crypto.b64url_decode("eR")


# ---------------------------------------------------------------------------
# multibase
# ---------------------------------------------------------------------------

def test_multibase_golden_shape():
    kp = crypto.keygen(bytes(32))
    mb = crypto.multibase_encode(kp.public)
    assert mb == "z6MkiTBz1ymuepAQ4HEHYSF1H8quG5GLVVQR3djdX3mDooWp"
    assert mb.startswith("z6Mk")
    assert crypto.multibase_decode(mb) == kp.public


def test_multibase_roundtrip_1000():
    rng = random.Random(3)
    for _ in range(1000):
        key = rng.randbytes(32)
        assert crypto.multibase_decode(crypto.multibase_encode(key)) == key


def test_multibase_rejects_wrong_prefix():
    # base58 of a non-Ed25519 multicodec prefix over the same key bytes
    key = bytes(32)
    forged = "z" + crypto.base58_encode(b"\xec\x01" + key)
    with pytest.raises(MalformedEncoding):
        crypto.multibase_decode(forged)
    with pytest.raises(MalformedEncoding):
        crypto.multibase_decode("m" + crypto.base58_encode(b"\xed\x01" + key))


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------

def test_canonicalize_sorts_keys():
    assert crypto.canonicalize({"b": 1, "a": 2}) == b'{"a":2,"b":1}'


def test_canonicalize_insertion_order_insensitive():
    rng = random.Random(4)
    items = [("alpha", 1), ("beta", [1, 2]), ("gamma", {"x": "y"}), ("delta", None)]
    reference = crypto.canonicalize(dict(items))
    for _ in range(50):
        rng.shuffle(items)
        assert crypto.canonicalize(dict(items)) == reference


def test_canonicalize_idempotent_on_nested():
    value = {"outer": {"z": [1, {"k": "v"}], "a": "text"}, "n": 0}
    once = crypto.canonicalize(value)
    import json

    assert crypto.canonicalize(json.loads(once)) == once


def test_canonicalize_empty_string_sha():
    # sha256 of canonicalize("") i.e. the two bytes '""'
    assert crypto.sha256(crypto.canonicalize("")).hex() == (
        "12ae32cb1ec02d01eda3581b127c1fee3b0dc53572ed6baf239721a03d82e126"
    )
    # and the well-known empty-input digest stays pinned
    assert crypto.sha256(b"").hex().startswith("e3b0c4")


def test_canonicalize_rejects_nonfinite():
    for bad in (float("nan"), float("inf"), -float("inf")):
        with pytest.raises(NonCanonicalizable):
            crypto.canonicalize({"x": bad})


def test_canonicalize_rejects_bad_types():
    with pytest.raises(NonCanonicalizable):
        crypto.canonicalize({"x": object()})
    with pytest.raises(NonCanonicalizable):
        crypto.canonicalize({1: "non-string key"})


def test_canonicalize_integers_plain():
    assert crypto.canonicalize([0, -7, 12345678901234]) == b"[0,-7,12345678901234]"
    assert crypto.canonicalize(5.0) == b"5"


# ---------------------------------------------------------------------------
# key files
# ---------------------------------------------------------------------------

def test_key_file_roundtrip(tmp_path):
    kp = crypto.keygen(bytes(range(32)))
    path = tmp_path / "key.json"
    crypto.save_key_file(path, kp)
    loaded = crypto.load_key_file(path)
    assert loaded.public == kp.public
    assert loaded.secret == kp.secret


def test_key_file_public_only(tmp_path):
    kp = crypto.keygen(bytes(range(32)))
    path = tmp_path / "pub.json"
    crypto.save_key_file(path, kp, include_secret=False)
    loaded = crypto.load_key_file(path)
    assert loaded.public == kp.public
    assert loaded.secret is None
    assert "secret" not in path.read_text()


def test_keypair_repr_hides_secret():
    kp = crypto.keygen(bytes(range(32)))
    assert crypto.b64url_encode(kp.secret) not in repr(kp)
    assert kp.secret.hex() not in repr(kp)
