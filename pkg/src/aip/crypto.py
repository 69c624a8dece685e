"""Cryptographic and encoding primitives shared by every AIP module.

Ed25519 keys and signatures (via the ``cryptography`` package), SHA-256,
unpadded base64url, base58btc multibase key encoding, and deterministic
canonical JSON bytes for signing.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import InvalidSeedLength, MalformedEncoding, NonCanonicalizable

SEED_LEN = 32
PUBLIC_KEY_LEN = 32
SIGNATURE_LEN = 64

# multicodec prefix for an Ed25519 public key (varint 0xED), per the
# conventional "z6Mk…" identifier shape.
MULTICODEC_ED25519_PUB = b"\xed\x01"

KEY_FILE_VERSION = 1


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 keypair. ``secret`` is the 32-byte seed, ``public`` the raw key.

    ``secret`` is excluded from repr so key material never leaks into logs.
    """

    public: bytes
    secret: Optional[bytes] = field(default=None, repr=False)

    @property
    def public_multibase(self) -> str:
        return multibase_encode(self.public)


def keygen(seed: Optional[bytes] = None) -> KeyPair:
    """Generate (or deterministically derive) an Ed25519 keypair.

    With ``seed`` supplied the result is deterministic; otherwise the seed
    comes from the OS RNG.
    """
    if seed is None:
        seed = os.urandom(SEED_LEN)
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_LEN:
        raise InvalidSeedLength(f"seed must be exactly {SEED_LEN} bytes")
    seed = bytes(seed)
    priv = Ed25519PrivateKey.from_private_bytes(seed)
    public = priv.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return KeyPair(public=public, secret=seed)


def derive_public(secret: bytes) -> bytes:
    """Public key for a 32-byte seed."""
    return keygen(secret).public


def sign(secret: bytes, message: bytes) -> bytes:
    """Ed25519 signature (64 bytes) over ``message``."""
    if len(secret) != SEED_LEN:
        raise InvalidSeedLength(f"secret must be exactly {SEED_LEN} bytes")
    return Ed25519PrivateKey.from_private_bytes(secret).sign(message)


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid for ``message`` under ``public``.

    Returns False (never raises) on any malformed or mismatched input.
    """
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public)).verify(
            bytes(signature), bytes(message)
        )
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# base64url (unpadded, canonical)
# ---------------------------------------------------------------------------

_B64URL_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_"
_B64URL_RE = re.compile(r"^[A-Za-z0-9_-]*$")
_B64_DECODE = {c: i for i, c in enumerate(_B64URL_ALPHABET)}


def b64url_encode(data: bytes) -> str:
    """Unpadded base64url."""
    import base64

    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    """Decode unpadded base64url; rejects padding, foreign characters, and
    non-canonical encodings (trailing bits that re-encode differently).

    The canonicality check makes encode/decode a bijection: no two distinct
    strings decode to the same bytes, so a one-character change in a wire
    segment always changes (or invalidates) the decoded bytes.
    """
    if not isinstance(text, str) or not _B64URL_RE.match(text):
        raise MalformedEncoding("not unpadded base64url")
    if len(text) % 4 == 1:
        raise MalformedEncoding("invalid base64url length")
    import base64

    padded = text + "=" * (-len(text) % 4)
    data = base64.urlsafe_b64decode(padded.encode("ascii"))
    if b64url_encode(data) != text:
        raise MalformedEncoding("non-canonical base64url")
    return data


# ---------------------------------------------------------------------------
# base58btc / multibase
# ---------------------------------------------------------------------------

_B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(_B58_ALPHABET)}


def base58_encode(data: bytes) -> str:
    n = int.from_bytes(data, "big")
    out = []
    while n:
        n, r = divmod(n, 58)
        out.append(_B58_ALPHABET[r])
    pad = 0
    for b in data:
        if b == 0:
            pad += 1
        else:
            break
    return "1" * pad + "".join(reversed(out))


def base58_decode(text: str) -> bytes:
    n = 0
    for c in text:
        if c not in _B58_INDEX:
            raise MalformedEncoding(f"invalid base58 character {c!r}")
        n = n * 58 + _B58_INDEX[c]
    raw = n.to_bytes((n.bit_length() + 7) // 8, "big") if n else b""
    pad = 0
    for c in text:
        if c == "1":
            pad += 1
        else:
            break
    return b"\x00" * pad + raw


def multibase_encode(public: bytes) -> str:
    """'z' + base58btc of the multicodec-prefixed Ed25519 public key."""
    if len(public) != PUBLIC_KEY_LEN:
        raise MalformedEncoding("public key must be 32 bytes")
    return "z" + base58_encode(MULTICODEC_ED25519_PUB + bytes(public))


@lru_cache(maxsize=8192)
def multibase_decode(text: str) -> bytes:
    """Inverse of multibase_encode; rejects non-Ed25519 multicodec prefixes.

    Pure and hot (verifiers decode the same holder/identity keys on every
    request), hence cached.
    """
    if not isinstance(text, str) or not text.startswith("z"):
        raise MalformedEncoding("multibase key must use base58btc ('z' prefix)")
    raw = base58_decode(text[1:])
    if len(raw) != len(MULTICODEC_ED25519_PUB) + PUBLIC_KEY_LEN:
        raise MalformedEncoding("multibase key has wrong length")
    if raw[: len(MULTICODEC_ED25519_PUB)] != MULTICODEC_ED25519_PUB:
        raise MalformedEncoding("multicodec prefix is not Ed25519-public")
    return raw[len(MULTICODEC_ED25519_PUB):]


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------

def canonicalize(value: Any) -> bytes:
    """Unique canonical JSON bytes of a structured value.

    Object keys sorted lexicographically by code point, no insignificant
    whitespace, integers without exponent or leading zeros, strings with
    minimal escaping. Pure function: equal logical values yield identical
    bytes; idempotent on already-canonical structures.
    """
    out: list[str] = []
    _write_canonical(value, out)
    return "".join(out).encode("utf-8")


# Printable ASCII without '"' or '\': needs no JSON escaping.
_PLAIN_STR_RE = re.compile(r'^[ !#-\[\]-~]*$')


def _write_canonical(value: Any, out: list) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_canonical_number(value))
    elif isinstance(value, str):
        if _PLAIN_STR_RE.match(value):
            out.append(f'"{value}"')
        else:
            out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _write_canonical(item, out)
        out.append("]")
    elif isinstance(value, dict):
        keys = list(value.keys())
        for k in keys:
            if not isinstance(k, str):
                raise NonCanonicalizable(f"object key is not a string: {k!r}")
        out.append("{")
        for i, k in enumerate(sorted(keys)):
            if i:
                out.append(",")
            _write_canonical(k, out)
            out.append(":")
            _write_canonical(value[k], out)
        out.append("}")
    else:
        raise NonCanonicalizable(f"cannot canonicalize {type(value).__name__}")


def _canonical_number(value: float) -> str:
    if math.isnan(value) or math.isinf(value):
        raise NonCanonicalizable("non-finite number")
    # Integral floats render as integers; signed structures in this protocol
    # only ever carry integers and strings, so this path is a safety valve.
    if value == int(value) and abs(value) < 2 ** 53:
        return str(int(value))
    return repr(value)


# ---------------------------------------------------------------------------
# Key files
# ---------------------------------------------------------------------------

def save_key_file(path, keypair: KeyPair, include_secret: bool = True) -> None:
    """Write a key file: JSON with the multibase public key and optionally
    the base64url seed. Secret-bearing files are chmod 0600."""
    data = {
        "aip_key_version": KEY_FILE_VERSION,
        "public_key_multibase": keypair.public_multibase,
    }
    if include_secret and keypair.secret is not None:
        data["secret_seed_b64url"] = b64url_encode(keypair.secret)
    p = Path(path)
    p.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    if "secret_seed_b64url" in data:
        os.chmod(p, 0o600)


def load_key_file(path) -> KeyPair:
    """Load a key file; returns a KeyPair (secret None for public-only files)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("aip_key_version") != KEY_FILE_VERSION:
        raise MalformedEncoding("unsupported key file version")
    public = multibase_decode(data["public_key_multibase"])
    secret = None
    if "secret_seed_b64url" in data:
        secret = b64url_decode(data["secret_seed_b64url"])
        if derive_public(secret) != public:
            raise MalformedEncoding("key file secret does not match public key")
    return KeyPair(public=public, secret=secret)
