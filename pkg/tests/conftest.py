"""Shared fixtures: offline resolvers, deterministic keys, identity builders."""

from __future__ import annotations

import json
import random

import pytest

from aip import crypto
from aip.identity import (
    AipId,
    IdentityDocument,
    PublicKeyEntry,
    Resolver,
    ResolverConfig,
    dict_fetcher,
    format_rfc3339,
    sign_document,
    well_known_url,
)

NOW = 1780272000  # 2026-06-01T00:00:00Z; all tests run on a frozen clock


@pytest.fixture
def now():
    return NOW


@pytest.fixture
def rng():
    return random.Random(0xA1B2)


@pytest.fixture
def offline_resolver():
    """Resolver whose fetcher always fails; key-form ids still resolve."""

    def no_fetch(url):
        raise RuntimeError(f"offline test resolver got fetch for {url}")

    return Resolver(ResolverConfig(fetcher=no_fetch))


def make_keypair(rng: random.Random) -> crypto.KeyPair:
    return crypto.keygen(rng.randbytes(32))


def key_id(kp: crypto.KeyPair) -> str:
    return str(AipId.for_public_key(kp.public))


def make_web_identity(domain, path, kp, now=NOW, key_valid=(-3600, 86400 * 30),
                      doc_ttl=86400 * 14):
    """Signed identity document plus its well-known URL."""
    aid = AipId.web(domain, path)
    entry = PublicKeyEntry(
        id="key-1",
        public_key_multibase=kp.public_multibase,
        valid_from=format_rfc3339(now + key_valid[0]),
        valid_until=format_rfc3339(now + key_valid[1]),
    )
    doc = sign_document(
        IdentityDocument(id=str(aid), public_keys=(entry,),
                         expires=format_rfc3339(now + doc_ttl)),
        kp.secret,
    )
    return aid, doc, well_known_url(aid)


def web_resolver(docs: dict) -> Resolver:
    """Resolver over an in-memory {url: document-dict} map."""
    raw = {url: json.dumps(doc.to_dict() if hasattr(doc, "to_dict") else doc).encode()
           for url, doc in docs.items()}
    return Resolver(ResolverConfig(fetcher=dict_fetcher(raw)))
