"""Agent identities and identity documents.

Two identifier forms share one verification path: ``aip:web:<domain>/<path>``
resolves over HTTPS to a self-signed identity document at a well-known URL;
``aip:key:ed25519:<multibase>`` is self-certifying and resolves to a
synthesized single-key document without any fetch.
"""

from __future__ import annotations

import json
import threading
import urllib.request
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional

from . import crypto
from .errors import (
    IdentityUnresolvable,
    KeyRevokedOrInvalid,
    MalformedId,
    NotWebId,
    SigningKeyNotListed,
)

AIP_VERSION = "1.0"
SUPPORTED_MAJOR = "1"

# Effectively-open validity window for synthesized key-form documents.
EPOCH_RFC3339 = "1970-01-01T00:00:00Z"
FAR_FUTURE_RFC3339 = "9999-12-31T23:59:59Z"

DEFAULT_MAX_DOCUMENT_BYTES = 64 * 1024
DEFAULT_CACHE_TTL = 300.0


# ---------------------------------------------------------------------------
# RFC 3339 timestamps <-> unix seconds
# ---------------------------------------------------------------------------

def parse_rfc3339(text: str) -> int:
    """Parse an RFC 3339 timestamp to integer unix seconds (UTC)."""
    if not isinstance(text, str):
        raise ValueError("timestamp must be a string")
    t = text.strip()
    if t.endswith("Z") or t.endswith("z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp missing timezone: {text!r}")
    return int(dt.timestamp())


def format_rfc3339(ts: int) -> str:
    """Integer unix seconds -> RFC 3339 Z-suffixed string."""
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


# ---------------------------------------------------------------------------
# AipId
# ---------------------------------------------------------------------------

_DOMAIN_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.-")
_PATH_SEGMENT_CHARS = set(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._~-"
)


@dataclass(frozen=True)
class AipId:
    """Parsed agent identifier: web-resolvable or self-certifying key form."""

    kind: str  # "web" | "key"
    domain: str = ""
    path: str = ""
    key_multibase: str = ""

    @classmethod
    def web(cls, domain: str, path: str) -> "AipId":
        return cls(kind="web", domain=domain, path=path)

    @classmethod
    def key(cls, multibase: str) -> "AipId":
        return cls(kind="key", key_multibase=multibase)

    @classmethod
    def for_public_key(cls, public: bytes) -> "AipId":
        return cls.key(crypto.multibase_encode(public))

    @property
    def is_web(self) -> bool:
        return self.kind == "web"

    @property
    def is_key(self) -> bool:
        return self.kind == "key"

    def public_key(self) -> bytes:
        """Embedded key bytes (key form only)."""
        if not self.is_key:
            raise MalformedId("not a key-form id")
        return crypto.multibase_decode(self.key_multibase)

    def __str__(self) -> str:
        return format_aip_id(self)


def parse_aip_id(text: str) -> AipId:
    """Parse ``aip:web:…`` / ``aip:key:ed25519:…`` text into an AipId."""
    if not isinstance(text, str):
        raise MalformedId("id must be a string")
    if text.startswith("aip:web:"):
        rest = text[len("aip:web:"):]
        domain, sep, path = rest.partition("/")
        if not sep or not domain or not path:
            raise MalformedId(f"web id needs '<domain>/<path>': {text!r}")
        if (
            not set(domain) <= _DOMAIN_CHARS
            or domain.startswith((".", "-"))
            or domain.endswith((".", "-"))
        ):
            raise MalformedId(f"bad domain in {text!r}")
        segments = path.split("/")
        for seg in segments:
            if not seg or not set(seg) <= _PATH_SEGMENT_CHARS:
                raise MalformedId(f"bad path segment {seg!r} in {text!r}")
        return AipId.web(domain, path)
    if text.startswith("aip:key:ed25519:"):
        mb = text[len("aip:key:ed25519:"):]
        try:
            crypto.multibase_decode(mb)
        except Exception as exc:
            raise MalformedId(f"bad multibase key in {text!r}: {exc}") from exc
        return AipId.key(mb)
    raise MalformedId(f"unrecognized id scheme: {text!r}")


def format_aip_id(aid: AipId) -> str:
    if aid.is_web:
        return f"aip:web:{aid.domain}/{aid.path}"
    return f"aip:key:ed25519:{aid.key_multibase}"


def well_known_url(aid: AipId) -> str:
    """HTTPS URL of a web identity's document under /.well-known/aip/."""
    if not aid.is_web:
        raise NotWebId("key-form ids are self-certifying; no document URL")
    return f"https://{aid.domain}/.well-known/aip/{aid.path}.json"


# ---------------------------------------------------------------------------
# Identity documents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PublicKeyEntry:
    id: str
    public_key_multibase: str
    valid_from: str
    valid_until: str
    type: str = "Ed25519"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": self.type,
            "public_key_multibase": self.public_key_multibase,
            "valid_from": self.valid_from,
            "valid_until": self.valid_until,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PublicKeyEntry":
        entry = cls(
            id=str(data["id"]),
            type=str(data.get("type", "Ed25519")),
            public_key_multibase=str(data["public_key_multibase"]),
            valid_from=str(data["valid_from"]),
            valid_until=str(data["valid_until"]),
        )
        if parse_rfc3339(entry.valid_from) >= parse_rfc3339(entry.valid_until):
            raise ValueError(f"key {entry.id}: valid_from must precede valid_until")
        crypto.multibase_decode(entry.public_key_multibase)
        return entry

    def public_key(self) -> bytes:
        return crypto.multibase_decode(self.public_key_multibase)

    def valid_at(self, at: int) -> bool:
        return parse_rfc3339(self.valid_from) <= at <= parse_rfc3339(self.valid_until)


@dataclass(frozen=True)
class IdentityDocument:
    """Published agent metadata with a self-signature over its canonical form.

    Unknown top-level fields are preserved in ``extra`` and re-serialized, so
    forward-compatible documents round-trip and stay verifiable.
    """

    id: str
    public_keys: tuple
    expires: str
    aip: str = AIP_VERSION
    delegation: dict = field(default_factory=lambda: {"max_depth": 3, "allow_ephemeral_grants": False})
    protocols: dict = field(default_factory=dict)
    extensions: dict = field(default_factory=dict)
    document_signature: Optional[str] = None
    extra: dict = field(default_factory=dict)

    _KNOWN = (
        "aip", "id", "public_keys", "delegation", "protocols",
        "extensions", "document_signature", "expires",
    )

    def to_dict(self, include_signature: bool = True) -> dict:
        data = {
            "aip": self.aip,
            "id": self.id,
            "public_keys": [k.to_dict() for k in self.public_keys],
            "delegation": dict(self.delegation),
            "protocols": dict(self.protocols),
            "expires": self.expires,
        }
        if self.extensions:
            data["extensions"] = dict(self.extensions)
        data.update(self.extra)
        if include_signature and self.document_signature is not None:
            data["document_signature"] = self.document_signature
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "IdentityDocument":
        if not isinstance(data, dict):
            raise ValueError("identity document must be a JSON object")
        keys = tuple(
            PublicKeyEntry.from_dict(k) for k in data.get("public_keys", [])
        )
        if not keys:
            raise ValueError("identity document lists no public keys")
        extra = {k: v for k, v in data.items() if k not in cls._KNOWN}
        return cls(
            aip=str(data.get("aip", "")),
            id=str(data["id"]),
            public_keys=keys,
            delegation=dict(data.get("delegation", {})),
            protocols=dict(data.get("protocols", {})),
            extensions=dict(data.get("extensions", {})),
            document_signature=data.get("document_signature"),
            expires=str(data["expires"]),
            extra=extra,
        )

    def signing_bytes(self) -> bytes:
        return crypto.canonicalize(self.to_dict(include_signature=False))

    def major_version(self) -> str:
        return self.aip.split(".", 1)[0]

    def key_bytes_valid_at(self, at: int) -> List[bytes]:
        return [k.public_key() for k in self.public_keys if k.valid_at(at)]


def sign_document(doc: IdentityDocument, secret: bytes) -> IdentityDocument:
    """Self-sign: Ed25519 over the canonical form minus the signature field.

    The signing key's public half must be listed in the document.
    """
    public = crypto.derive_public(secret)
    listed = {k.public_key() for k in doc.public_keys}
    if public not in listed:
        raise SigningKeyNotListed("signing key is not in public_keys")
    sig = crypto.sign(secret, doc.signing_bytes())
    return replace(doc, document_signature=crypto.b64url_encode(sig))


def verify_document(doc: IdentityDocument) -> bool:
    """Check major version support, then the self-signature under a listed key."""
    if doc.major_version() != SUPPORTED_MAJOR:
        return False
    if not doc.document_signature:
        return False
    try:
        sig = crypto.b64url_decode(doc.document_signature)
    except Exception:
        return False
    message = doc.signing_bytes()
    return any(crypto.verify(k.public_key(), message, sig) for k in doc.public_keys)


def select_key(doc: IdentityDocument, key_id: Optional[str], at: int) -> bytes:
    """Pick a key whose validity window contains ``at``.

    With ``key_id`` given, that key specifically must be valid.
    """
    if key_id is not None:
        for k in doc.public_keys:
            if k.id == key_id:
                if k.valid_at(at):
                    return k.public_key()
                raise KeyRevokedOrInvalid(f"key {key_id} not valid at {format_rfc3339(at)}")
        raise KeyRevokedOrInvalid(f"no key with id {key_id!r}")
    for k in doc.public_keys:
        if k.valid_at(at):
            return k.public_key()
    raise KeyRevokedOrInvalid(f"no key valid at {format_rfc3339(at)}")


def synthesize_key_document(aid: AipId) -> IdentityDocument:
    """Minimal document for a self-certifying id: exactly the embedded key,
    open validity window, conservative delegation defaults."""
    entry = PublicKeyEntry(
        id="key-0",
        public_key_multibase=aid.key_multibase,
        valid_from=EPOCH_RFC3339,
        valid_until=FAR_FUTURE_RFC3339,
    )
    return IdentityDocument(
        id=format_aip_id(aid),
        public_keys=(entry,),
        expires=FAR_FUTURE_RFC3339,
        delegation={"max_depth": 3, "allow_ephemeral_grants": False},
    )


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------

@dataclass
class ResolverConfig:
    """How to fetch and cache identity documents.

    ``fetcher`` maps a URL to raw bytes; swapping it is how tests, fixtures,
    and the demo server stay hermetic.
    """

    fetcher: Callable[[str], bytes]
    cache_ttl: float = DEFAULT_CACHE_TTL
    max_document_bytes: int = DEFAULT_MAX_DOCUMENT_BYTES


class Resolver:
    """Resolves AipIds to verified identity documents, with caching.

    Thread-safe: cache updates happen under a lock, readers see either the
    old entry or the new one. Key-form resolution is pure (never fetches).
    Both caches are size-capped so ephemeral-agent churn cannot grow them
    without bound; eviction just clears (synthesis and re-fetch are cheap).
    """

    MAX_CACHE_ENTRIES = 4096

    def __init__(self, config: ResolverConfig):
        self.config = config
        self._cache: Dict[str, tuple] = {}
        self._key_cache: Dict[str, IdentityDocument] = {}
        self._lock = threading.Lock()

    def resolve(self, aid: AipId, now: int) -> IdentityDocument:
        if aid.is_key:
            # synthesis is pure; keep one immutable document per key
            with self._lock:
                doc = self._key_cache.get(aid.key_multibase)
                if doc is None:
                    if len(self._key_cache) >= self.MAX_CACHE_ENTRIES:
                        self._key_cache.clear()
                    doc = synthesize_key_document(aid)
                    self._key_cache[aid.key_multibase] = doc
            return doc
        url = well_known_url(aid)
        with self._lock:
            entry = self._cache.get(url)
            if entry is not None and now < entry[0]:
                return entry[1]
        doc = self._fetch_and_verify(aid, url, now)
        expiry = min(now + self.config.cache_ttl, parse_rfc3339(doc.expires))
        with self._lock:
            if len(self._cache) >= self.MAX_CACHE_ENTRIES:
                self._cache.clear()
            self._cache[url] = (expiry, doc)
        return doc

    def resolve_text(self, id_text: str, now: int) -> IdentityDocument:
        try:
            aid = parse_aip_id(id_text)
        except MalformedId as exc:
            raise IdentityUnresolvable(f"unparseable id {id_text!r}: {exc.detail}") from exc
        return self.resolve(aid, now)

    def _fetch_and_verify(self, aid: AipId, url: str, now: int) -> IdentityDocument:
        try:
            raw = self.config.fetcher(url)
        except Exception as exc:
            raise IdentityUnresolvable(f"fetch failed for {url}: {exc}") from exc
        if len(raw) > self.config.max_document_bytes:
            raise IdentityUnresolvable(
                f"document exceeds {self.config.max_document_bytes} bytes"
            )
        try:
            doc = IdentityDocument.from_dict(json.loads(raw.decode("utf-8")))
        except Exception as exc:
            raise IdentityUnresolvable(f"document parse failed: {exc}") from exc
        if not verify_document(doc):
            raise IdentityUnresolvable("document self-signature verification failed")
        if doc.id != format_aip_id(aid):
            raise IdentityUnresolvable(
                f"document id {doc.id!r} does not match requested id"
            )
        try:
            expires = parse_rfc3339(doc.expires)
        except ValueError as exc:
            raise IdentityUnresolvable(f"bad expires timestamp: {exc}") from exc
        if now > expires:
            raise IdentityUnresolvable(f"document expired at {doc.expires}")
        return doc


# ---------------------------------------------------------------------------
# Fetchers
# ---------------------------------------------------------------------------

def http_fetcher(timeout: float = 5.0) -> Callable[[str], bytes]:
    """Network fetcher over urllib (https only)."""

    def fetch(url: str) -> bytes:
        if not url.startswith(("https://", "http://")):
            raise ValueError(f"refusing non-http(s) url {url!r}")
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()

    return fetch


def fixture_fetcher(root) -> Callable[[str], bytes]:
    """Offline fetcher: documents live under <root>/<host>/<url path>.

    e.g. https://jamjet.dev/.well-known/aip/agents/research.json is read
    from <root>/jamjet.dev/.well-known/aip/agents/research.json.
    """
    root = Path(root)

    def fetch(url: str) -> bytes:
        rest = url.split("://", 1)[1]
        host, _, path = rest.partition("/")
        target = (root / host / path).resolve()
        if root.resolve() not in target.parents:
            raise ValueError(f"fixture path escapes root: {url!r}")
        return target.read_bytes()

    return fetch


def dict_fetcher(documents: Dict[str, bytes]) -> Callable[[str], bytes]:
    """In-memory fetcher keyed by exact URL; used by tests and the harness."""

    def fetch(url: str) -> bytes:
        if url not in documents:
            raise KeyError(f"no document at {url}")
        return documents[url]

    return fetch
