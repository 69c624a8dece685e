"""Compact-mode tokens: EdDSA-signed JWTs for single-hop grants.

The wire form is three dot-separated unpadded base64url segments. The header
is fixed to exactly ``{"alg":"EdDSA","typ":"aip+jwt"}``; claims are
serialized canonically so equal claim sets produce identical wires.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional

from . import crypto
from .errors import (
    InvalidClaims,
    KeyRevoked,
    SignatureInvalid,
    TokenExpired,
    TokenMalformed,
)
from .identity import IdentityDocument, Resolver, parse_aip_id

COMPACT_HEADER = {"alg": "EdDSA", "typ": "aip+jwt"}

_BUDGET_RE = re.compile(r"^\d+(\.\d{1,2})?$")


@dataclass(frozen=True)
class CompactClaims:
    """Claim set of a compact token.

    ``budget_usd`` is a decimal string (never a JSON float) so the signed
    bytes are deterministic and the cents mapping stays exact.
    """

    iss: str
    sub: str
    scope: tuple
    budget_usd: str
    max_depth: int
    iat: int
    exp: int
    jti: Optional[str] = None

    def validate(self) -> None:
        parse_aip_id(self.iss)
        parse_aip_id(self.sub)
        if not self.scope or not all(isinstance(s, str) and s for s in self.scope):
            raise InvalidClaims("scope must be a non-empty list of scope strings")
        if not isinstance(self.budget_usd, str) or not _BUDGET_RE.match(self.budget_usd):
            raise InvalidClaims(
                "budget_usd must be a non-negative decimal string with <= 2 fraction digits"
            )
        if not isinstance(self.max_depth, int) or isinstance(self.max_depth, bool) or self.max_depth < 0:
            raise InvalidClaims("max_depth must be an integer >= 0")
        for name in ("iat", "exp"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise InvalidClaims(f"{name} must be unix seconds")
        if self.iat > self.exp:
            raise InvalidClaims("iat must not exceed exp")
        if self.jti is not None and (not isinstance(self.jti, str) or not self.jti):
            raise InvalidClaims("jti, if present, must be a non-empty string")

    def budget_cents(self) -> int:
        """Exact USD -> integer cents (validated claims never lose precision)."""
        return int(Decimal(self.budget_usd) * 100)

    def to_dict(self) -> dict:
        data = {
            "iss": self.iss,
            "sub": self.sub,
            "scope": list(self.scope),
            "budget_usd": self.budget_usd,
            "max_depth": self.max_depth,
            "iat": self.iat,
            "exp": self.exp,
        }
        if self.jti is not None:
            data["jti"] = self.jti
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CompactClaims":
        try:
            scope = data["scope"]
            if not isinstance(scope, list):
                raise InvalidClaims("scope must be a list")
            return cls(
                iss=data["iss"],
                sub=data["sub"],
                scope=tuple(scope),
                budget_usd=data["budget_usd"],
                max_depth=data["max_depth"],
                iat=data["iat"],
                exp=data["exp"],
                jti=data.get("jti"),
            )
        except KeyError as exc:
            raise InvalidClaims(f"missing claim {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class VerifiedCompact:
    """Accepted compact token: its claims plus the resolved issuer document."""

    claims: CompactClaims
    issuer_doc: IdentityDocument


def create_compact(
    claims: CompactClaims,
    issuer_secret: bytes,
    issuer_key_id: Optional[str] = None,
) -> str:
    """Mint a compact token. ``issuer_key_id`` is caller bookkeeping only;
    the fixed header leaves no place for a kid and verification tries all
    issuer keys valid at verification time."""
    claims.validate()
    header_b64 = crypto.b64url_encode(crypto.canonicalize(COMPACT_HEADER))
    claims_b64 = crypto.b64url_encode(crypto.canonicalize(claims.to_dict()))
    signing_input = f"{header_b64}.{claims_b64}".encode("ascii")
    sig = crypto.sign(issuer_secret, signing_input)
    return f"{header_b64}.{claims_b64}.{crypto.b64url_encode(sig)}"


def verify_compact(
    wire: str,
    resolver: Resolver,
    now: int,
    leeway: int = 0,
) -> VerifiedCompact:
    """Verify a compact token.

    Check order: wire shape, header, issuer resolution, signature under an
    issuer key valid at ``now``, expiry (valid while now <= exp + leeway),
    claim invariants.
    """
    if not isinstance(wire, str):
        raise TokenMalformed("token must be a string")
    parts = wire.split(".")
    if len(parts) != 3:
        raise TokenMalformed("compact wire must have exactly two dots")
    try:
        header_raw = crypto.b64url_decode(parts[0])
        claims_raw = crypto.b64url_decode(parts[1])
        sig = crypto.b64url_decode(parts[2])
    except Exception as exc:
        raise TokenMalformed(f"bad base64url segment: {exc}") from exc
    try:
        header = json.loads(header_raw.decode("utf-8"))
    except Exception as exc:
        raise TokenMalformed(f"header is not JSON: {exc}") from exc
    if header != COMPACT_HEADER:
        raise TokenMalformed('header must be exactly {"alg":"EdDSA","typ":"aip+jwt"}')
    try:
        claims = CompactClaims.from_dict(json.loads(claims_raw.decode("utf-8")))
    except InvalidClaims as exc:
        raise TokenMalformed(f"bad claims: {exc.detail}") from exc
    except Exception as exc:
        raise TokenMalformed(f"claims are not JSON: {exc}") from exc

    try:
        iss = parse_aip_id(claims.iss)
    except Exception as exc:
        raise TokenMalformed(f"bad iss: {exc}") from exc
    issuer_doc = resolver.resolve(iss, now)

    keys = issuer_doc.key_bytes_valid_at(now)
    if not keys:
        raise KeyRevoked(f"issuer has no key valid at {now}")
    signing_input = f"{parts[0]}.{parts[1]}".encode("ascii")
    if len(sig) != crypto.SIGNATURE_LEN or not any(
        crypto.verify(k, signing_input, sig) for k in keys
    ):
        raise SignatureInvalid("compact signature does not verify under issuer keys")

    if now > claims.exp + leeway:
        raise TokenExpired(f"token expired at {claims.exp}")

    try:
        claims.validate()
    except InvalidClaims as exc:
        raise TokenMalformed(f"claims violate invariants: {exc.detail}") from exc

    return VerifiedCompact(claims=claims, issuer_doc=issuer_doc)
