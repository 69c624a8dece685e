"""Chained-mode tokens: append-only signed block sequences.

A token is a list of blocks (authority, delegations, completion,
attestations) plus a holder proof. Every block carries two signatures:

* ``chain_sig`` — by the root identity key for block 0, and by the holder
  key named in the previous block for every later block. Possession of the
  current holder secret is what authorizes appending; the secret is consumed
  by the append and replaced with a fresh one, which is what makes stripping
  blocks or re-signing history infeasible for downstream holders.
* ``identity_sig`` — by the acting agent's identity key over the payload
  hash, binding each hop to a resolvable identity for attribution.

Blocks additionally chain by hash: each block names the SHA-256 of its
predecessor's canonical bytes, so middle-block removal is detectable even
under key reuse.

Wire form: ``"AIP1."`` followed by canonical JSON of ``{blocks, proof}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Sequence, Tuple

from . import crypto, policy
from .compact import VerifiedCompact
from .errors import (
    BudgetExceeded,
    BudgetIncreased,
    DepthExceeded,
    EmptyContext,
    ExecutorMismatch,
    ExpiryExtended,
    IdentityUnresolvable,
    InvalidPayload,
    KeyRevoked,
    NoSuchCompletion,
    NotIssuer,
    NotRepresentable,
    ParseError,
    ScopeInsufficient,
    ScopeWidened,
    SealedToken,
    SignatureInvalid,
    SigningKeyNotListed,
    TokenExpired,
    TokenMalformed,
)
from .identity import Resolver, format_rfc3339, parse_aip_id, parse_rfc3339

WIRE_MAGIC = "AIP1."
# b64url of 32 zero bytes: the prev_hash of block 0.
ZERO_HASH = crypto.b64url_encode(b"\x00" * 32)

KIND_AUTHORITY = "authority"
KIND_DELEGATION = "delegation"
KIND_COMPLETION = "completion"
KIND_ATTESTATION = "attestation"

COMPLETION_STATUSES = ("completed", "failed", "partial")
VERIFICATION_STATUSES = ("self_reported", "counter_signed", "third_party_attested")
ATTESTATION_VERDICTS = ("verified", "disputed")

_RESULT_HASH_RE = re.compile(r"^sha256:[0-9a-f]{64}$")
_COST_RE = re.compile(r"^\d+(\.\d{1,2})?$")


# ---------------------------------------------------------------------------
# Scope semantics
# ---------------------------------------------------------------------------

def scope_covers(granted: Sequence[str], item: str) -> bool:
    """True iff one granted scope string covers ``item``.

    ``<category>:*`` is a wildcard for its category; a wildcard item is only
    covered by the same wildcard (never introduced below a concrete parent).
    """
    if item in granted:
        return True
    if ":" in item:
        category = item.split(":", 1)[0]
        return f"{category}:*" in granted
    return False


def scope_subset(child: Sequence[str], parent: Sequence[str]) -> bool:
    return all(scope_covers(parent, item) for item in child)


def strip_tool_prefix(tool: str) -> str:
    """Bare tool name for policy facts: 'tool:search' -> 'search'."""
    if tool.startswith("tool:"):
        return tool[len("tool:"):]
    return tool


def _check_scope_list(scope) -> tuple:
    if not isinstance(scope, (list, tuple)) or not scope:
        raise ValueError("scope must be a non-empty list")
    for item in scope:
        if not isinstance(item, str) or not item:
            raise ValueError("scope items must be non-empty strings")
    return tuple(scope)


def _check_int(value, name) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    return value


def _check_str(value, name) -> str:
    if not isinstance(value, str):
        raise ValueError(f"{name} must be a string")
    return value


def _as_tuple(value) -> tuple:
    if not isinstance(value, (list, tuple)):
        raise ValueError("expected a list")
    return tuple(value)


def _check_checks(checks) -> tuple:
    if not isinstance(checks, (list, tuple)):
        raise ValueError("checks must be a list of strings")
    for c in checks:
        if not isinstance(c, str):
            raise ValueError("checks must be strings")
    return tuple(checks)


# ---------------------------------------------------------------------------
# Block payloads
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuthorityPayload:
    """Block 0: the root grant that ceilings the whole chain."""

    identity: str
    scope: tuple
    budget_cents: int
    max_depth: int
    expires: str
    checks: tuple = ()
    extensions: dict = field(default_factory=dict)

    def ensure_shape(self) -> None:
        """Type-level constraints; raises ValueError. Runs on both wire
        parsing and verification so hand-built blocks cannot smuggle
        unprocessable values past the signature checks."""
        _check_str(self.identity, "identity")
        _check_scope_list(self.scope)
        _check_int(self.budget_cents, "budget_cents")
        _check_int(self.max_depth, "max_depth")
        parse_rfc3339(_check_str(self.expires, "expires"))
        _check_checks(self.checks)
        crypto.canonicalize(self.extensions)  # only free-form field

    def validate(self) -> None:
        try:
            self.ensure_shape()
            parse_aip_id(self.identity)
        except InvalidPayload:
            raise
        except Exception as exc:
            raise InvalidPayload(str(exc)) from exc
        if self.budget_cents < 0:
            raise InvalidPayload("budget_cents must be >= 0")
        if self.max_depth < 0:
            raise InvalidPayload("max_depth must be >= 0")
        _validate_checks_strings(self.checks)

    def to_dict(self) -> dict:
        data = {
            "identity": self.identity,
            "scope": list(self.scope),
            "budget_cents": self.budget_cents,
            "max_depth": self.max_depth,
            "expires": self.expires,
        }
        if self.checks:
            data["checks"] = list(self.checks)
        if self.extensions:
            data["extensions"] = dict(self.extensions)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "AuthorityPayload":
        payload = cls(
            identity=data["identity"],
            scope=_as_tuple(data["scope"]),
            budget_cents=data["budget_cents"],
            max_depth=data["max_depth"],
            expires=data["expires"],
            checks=_as_tuple(data.get("checks", [])),
            extensions=dict(data.get("extensions", {})),
        )
        payload.ensure_shape()
        return payload


@dataclass(frozen=True)
class DelegationPayload:
    """Block N: narrowed authority handed from delegator to delegatee."""

    delegator: str
    delegatee: str
    scope: tuple
    budget_cents: int
    expires: str
    context: str
    checks: tuple = ()

    def ensure_shape(self) -> None:
        _check_str(self.delegator, "delegator")
        _check_str(self.delegatee, "delegatee")
        _check_scope_list(self.scope)
        _check_int(self.budget_cents, "budget_cents")
        parse_rfc3339(_check_str(self.expires, "expires"))
        _check_str(self.context, "context")
        _check_checks(self.checks)

    def validate(self) -> None:
        try:
            self.ensure_shape()
            parse_aip_id(self.delegator)
            parse_aip_id(self.delegatee)
        except (InvalidPayload, EmptyContext):
            raise
        except Exception as exc:
            raise InvalidPayload(str(exc)) from exc
        if self.budget_cents < 0:
            raise InvalidPayload("budget_cents must be >= 0")
        if not self.context.strip():
            raise EmptyContext("delegation context must be non-empty")
        _validate_checks_strings(self.checks)

    def to_dict(self) -> dict:
        data = {
            "delegator": self.delegator,
            "delegatee": self.delegatee,
            "scope": list(self.scope),
            "budget_cents": self.budget_cents,
            "expires": self.expires,
            "context": self.context,
        }
        if self.checks:
            data["checks"] = list(self.checks)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "DelegationPayload":
        payload = cls(
            delegator=data["delegator"],
            delegatee=data["delegatee"],
            scope=_as_tuple(data["scope"]),
            budget_cents=data["budget_cents"],
            expires=data["expires"],
            context=data["context"],
            checks=_as_tuple(data.get("checks", [])),
        )
        payload.ensure_shape()
        return payload


@dataclass(frozen=True)
class CompletionPayload:
    """Terminal record of what the executing agent claims happened."""

    status: str
    result_hash: str
    cost_usd: str
    tokens_used: int
    verification_status: str = "self_reported"
    extensions: dict = field(default_factory=dict)

    def ensure_shape(self) -> None:
        if self.status not in COMPLETION_STATUSES:
            raise ValueError(f"status must be one of {COMPLETION_STATUSES}")
        if not isinstance(self.result_hash, str) or not _RESULT_HASH_RE.match(self.result_hash):
            raise ValueError("result_hash must be 'sha256:<64 hex chars>'")
        if self.verification_status not in VERIFICATION_STATUSES:
            raise ValueError(
                f"verification_status must be one of {VERIFICATION_STATUSES}"
            )
        if not isinstance(self.cost_usd, str) or not _COST_RE.match(self.cost_usd):
            raise ValueError("cost_usd must be a non-negative decimal string")
        _check_int(self.tokens_used, "tokens_used")
        crypto.canonicalize(self.extensions)  # only free-form field

    def validate(self) -> None:
        try:
            self.ensure_shape()
        except Exception as exc:
            raise InvalidPayload(str(exc)) from exc
        if self.tokens_used < 0:
            raise InvalidPayload("tokens_used must be an integer >= 0")

    def to_dict(self) -> dict:
        data = {
            "status": self.status,
            "result_hash": self.result_hash,
            "verification_status": self.verification_status,
            "cost_usd": self.cost_usd,
            "tokens_used": self.tokens_used,
        }
        if self.extensions:
            data["extensions"] = dict(self.extensions)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CompletionPayload":
        payload = cls(
            status=data["status"],
            result_hash=data["result_hash"],
            verification_status=data.get("verification_status", "self_reported"),
            cost_usd=data["cost_usd"],
            tokens_used=data["tokens_used"],
            extensions=dict(data.get("extensions", {})),
        )
        payload.ensure_shape()
        return payload


@dataclass(frozen=True)
class AttestationPayload:
    """Optional trust escalation for a recorded completion."""

    attester: str
    attested_block_index: int
    verdict: str
    note: str = ""

    def ensure_shape(self) -> None:
        _check_str(self.attester, "attester")
        _check_int(self.attested_block_index, "attested_block_index")
        if self.verdict not in ATTESTATION_VERDICTS:
            raise ValueError(f"verdict must be one of {ATTESTATION_VERDICTS}")
        _check_str(self.note, "note")

    def validate(self) -> None:
        try:
            self.ensure_shape()
            parse_aip_id(self.attester)
        except Exception as exc:
            raise InvalidPayload(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "attester": self.attester,
            "attested_block_index": self.attested_block_index,
            "verdict": self.verdict,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttestationPayload":
        payload = cls(
            attester=data["attester"],
            attested_block_index=data["attested_block_index"],
            verdict=data["verdict"],
            note=data.get("note", ""),
        )
        payload.ensure_shape()
        return payload


_PAYLOAD_TYPES = {
    KIND_AUTHORITY: AuthorityPayload,
    KIND_DELEGATION: DelegationPayload,
    KIND_COMPLETION: CompletionPayload,
    KIND_ATTESTATION: AttestationPayload,
}


def _validate_checks_strings(checks: Sequence[str]) -> None:
    for text in checks:
        expr = policy.parse_check(text)  # may raise ParseError
        if expr.profile is policy.Profile.ADVANCED:
            raise InvalidPayload(f"unsupported policy profile for check: {text!r}")


# ---------------------------------------------------------------------------
# Blocks, proofs, tokens
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    index: int
    kind: str
    payload: object
    prev_hash: str  # hex SHA-256 of previous block's canonical bytes
    identity_sig: str  # base64url, by the acting agent's identity key
    chain_sig: str  # base64url, by the chain key for this position
    next_holder_key: Optional[str] = None  # multibase; absent on sealed terminal

    def to_dict(self) -> dict:
        data = {
            "index": self.index,
            "kind": self.kind,
            "payload": self.payload.to_dict(),
            "prev_hash": self.prev_hash,
            "identity_sig": self.identity_sig,
            "chain_sig": self.chain_sig,
        }
        if self.next_holder_key is not None:
            data["next_holder_key"] = self.next_holder_key
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Block":
        kind = _check_str(data["kind"], "kind")
        if kind not in _PAYLOAD_TYPES:
            raise ValueError(f"unknown block kind {kind!r}")
        payload = _PAYLOAD_TYPES[kind].from_dict(data["payload"])
        nh = data.get("next_holder_key")
        if nh is not None:
            crypto.multibase_decode(_check_str(nh, "next_holder_key"))
        prev_hash = _check_str(data["prev_hash"], "prev_hash")
        if len(crypto.b64url_decode(prev_hash)) != 32:
            raise ValueError("prev_hash must encode a 32-byte digest")
        return cls(
            index=_check_int(data["index"], "index"),
            kind=kind,
            payload=payload,
            prev_hash=prev_hash,
            identity_sig=_check_str(data["identity_sig"], "identity_sig"),
            chain_sig=_check_str(data["chain_sig"], "chain_sig"),
            next_holder_key=nh,
        )


@dataclass(frozen=True)
class Proof:
    """Open (extendable, carries the live holder seed) or Sealed (terminal)."""

    kind: str  # "open" | "sealed"
    holder_secret: Optional[bytes] = field(default=None, repr=False)
    seal_sig: Optional[bytes] = None

    @classmethod
    def open(cls, holder_secret: bytes) -> "Proof":
        return cls(kind="open", holder_secret=holder_secret)

    @classmethod
    def sealed(cls, seal_sig: bytes) -> "Proof":
        return cls(kind="sealed", seal_sig=seal_sig)

    @property
    def is_open(self) -> bool:
        return self.kind == "open"

    def to_dict(self) -> dict:
        if self.kind == "open":
            return {"kind": "open", "holder_secret": crypto.b64url_encode(self.holder_secret)}
        return {"kind": "sealed", "seal_sig": crypto.b64url_encode(self.seal_sig)}

    @classmethod
    def from_dict(cls, data: dict) -> "Proof":
        kind = data.get("kind")
        if kind == "open":
            secret = crypto.b64url_decode(_check_str(data["holder_secret"], "holder_secret"))
            if len(secret) != crypto.SEED_LEN:
                raise ValueError("holder_secret must be a 32-byte seed")
            return cls.open(secret)
        if kind == "sealed":
            sig = crypto.b64url_decode(_check_str(data["seal_sig"], "seal_sig"))
            if len(sig) != crypto.SIGNATURE_LEN:
                raise ValueError("seal_sig must be a 64-byte signature")
            return cls.sealed(sig)
        raise ValueError(f"unknown proof kind {kind!r}")


@dataclass(frozen=True)
class ChainedToken:
    blocks: tuple
    proof: Proof

    @property
    def depth(self) -> int:
        """Number of delegation blocks."""
        return sum(1 for b in self.blocks if b.kind == KIND_DELEGATION)

    def authority(self) -> AuthorityPayload:
        return self.blocks[0].payload

    def to_dict(self) -> dict:
        return {
            "blocks": [b.to_dict() for b in self.blocks],
            "proof": self.proof.to_dict(),
        }


def block_hash(block: Block) -> str:
    """b64url SHA-256 of the block's canonical bytes (signatures included)."""
    return crypto.b64url_encode(crypto.sha256(crypto.canonicalize(block.to_dict())))


def _chain_signing_bytes(index, kind, payload_dict, prev_hash, next_holder_key) -> bytes:
    data = {
        "index": index,
        "kind": kind,
        "payload": payload_dict,
        "prev_hash": prev_hash,
    }
    if next_holder_key is not None:
        data["next_holder_key"] = next_holder_key
    return crypto.canonicalize(data)


def _identity_signing_bytes(payload_dict: dict) -> bytes:
    return crypto.sha256(crypto.canonicalize(payload_dict))


def _build_block(
    index: int,
    kind: str,
    payload,
    prev_hash: str,
    chain_secret: bytes,
    identity_secret: bytes,
    next_holder_key: Optional[str],
) -> Block:
    payload_dict = payload.to_dict()
    chain_sig = crypto.sign(
        chain_secret,
        _chain_signing_bytes(index, kind, payload_dict, prev_hash, next_holder_key),
    )
    identity_sig = crypto.sign(identity_secret, _identity_signing_bytes(payload_dict))
    return Block(
        index=index,
        kind=kind,
        payload=payload,
        prev_hash=prev_hash,
        identity_sig=crypto.b64url_encode(identity_sig),
        chain_sig=crypto.b64url_encode(chain_sig),
        next_holder_key=next_holder_key,
    )


def _seal_message(last_block: Block, challenge: Optional[bytes]) -> bytes:
    base = crypto.canonicalize(last_block.to_dict())
    if challenge is None:
        return crypto.sha256(base)
    return crypto.sha256(base + challenge)


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------

def serialize(token: ChainedToken) -> str:
    """Wire string: 'AIP1.' + canonical JSON of {blocks, proof}."""
    return WIRE_MAGIC + crypto.canonicalize(token.to_dict()).decode("utf-8")


def deserialize(wire: str) -> ChainedToken:
    """Parse a wire string, validating structure only (no signatures)."""
    if not isinstance(wire, str) or not wire.startswith(WIRE_MAGIC):
        raise TokenMalformed(f"chained wire must start with {WIRE_MAGIC!r}")
    try:
        data = json.loads(wire[len(WIRE_MAGIC):])
    except Exception as exc:
        raise TokenMalformed(f"wire is not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise TokenMalformed("wire must encode an object")
    try:
        blocks = tuple(Block.from_dict(b) for b in data.get("blocks", []))
        proof = Proof.from_dict(data.get("proof", {}))
    except TokenMalformed:
        raise
    except Exception as exc:
        raise TokenMalformed(f"bad token structure: {exc}") from exc
    token = ChainedToken(blocks=blocks, proof=proof)
    _structural_check(token)
    return token


def _structural_check(token: ChainedToken) -> None:
    """Shape invariants shared by deserialize and verify_chain.

    Signature-free: payload shapes, index contiguity, kind ordering,
    holder-key placement, proof shape, attestation references, check
    parseability and profile. Runs on hand-built tokens too, so a forged
    block can never push an unprocessable value past this point.
    """
    blocks = token.blocks
    if not blocks:
        raise TokenMalformed("token has no blocks")
    completion_index = None
    for i, block in enumerate(blocks):
        expected_type = _PAYLOAD_TYPES.get(block.kind)
        if expected_type is None or not isinstance(block.payload, expected_type):
            raise TokenMalformed(f"block {i} kind/payload mismatch")
        try:
            block.payload.ensure_shape()
            if block.next_holder_key is not None:
                crypto.multibase_decode(block.next_holder_key)
        except TokenMalformed:
            raise
        except Exception as exc:
            raise TokenMalformed(f"bad block {i} shape: {exc}") from exc
        if block.index != i:
            raise TokenMalformed(f"block index {block.index} at position {i}")
        if i == 0 and block.kind != KIND_AUTHORITY:
            raise TokenMalformed("block 0 must be an authority block")
        if i > 0 and block.kind == KIND_AUTHORITY:
            raise TokenMalformed("authority block may only appear at index 0")
        if completion_index is not None and block.kind != KIND_ATTESTATION:
            raise TokenMalformed("only attestations may follow a completion block")
        if block.kind == KIND_COMPLETION:
            completion_index = i
        if block.kind == KIND_ATTESTATION:
            ref = block.payload.attested_block_index
            if not (0 <= ref < len(blocks)) or blocks[ref].kind != KIND_COMPLETION:
                raise TokenMalformed(
                    f"attestation references block {ref}, which is not a completion"
                )
        if i < len(blocks) - 1 and block.next_holder_key is None:
            raise TokenMalformed(f"non-terminal block {i} lacks next_holder_key")
    last = blocks[-1]
    if last.next_holder_key is None:
        if token.proof.is_open:
            raise TokenMalformed("open proof requires a holder key on the last block")
        if len(blocks) < 2:
            raise TokenMalformed("sealed single-block token names no holder key")
    proof = token.proof
    if proof.kind == "open":
        if not isinstance(proof.holder_secret, bytes) or len(proof.holder_secret) != crypto.SEED_LEN:
            raise TokenMalformed("open proof needs a 32-byte holder seed")
    elif proof.kind == "sealed":
        if not isinstance(proof.seal_sig, bytes) or len(proof.seal_sig) != crypto.SIGNATURE_LEN:
            raise TokenMalformed("sealed proof needs a 64-byte signature")
    else:
        raise TokenMalformed(f"unknown proof kind {proof.kind!r}")
    for block in blocks:
        checks = getattr(block.payload, "checks", ())
        for text in checks:
            try:
                expr = policy.parse_check(text)
            except ParseError as exc:
                raise TokenMalformed(f"unparseable check {text!r}: {exc.detail}") from exc
            if expr.profile is policy.Profile.ADVANCED:
                raise TokenMalformed("unsupported policy profile")


# ---------------------------------------------------------------------------
# Minting and appending
# ---------------------------------------------------------------------------

def _require_identity_key(resolver: Resolver, id_text: str, secret: bytes, now: int) -> None:
    doc = resolver.resolve_text(id_text, now)
    public = crypto.derive_public(secret)
    if public not in doc.key_bytes_valid_at(now):
        raise SigningKeyNotListed(
            f"secret does not match a key of {id_text} valid at {format_rfc3339(now)}"
        )


def mint_authority(
    payload: AuthorityPayload,
    root_secret: bytes,
    resolver: Resolver,
    now: int,
) -> ChainedToken:
    """Create a one-block open token; block 0 is chain-signed by the root
    identity key and the fresh holder secret rides in the Open proof."""
    payload.validate()
    _require_identity_key(resolver, payload.identity, root_secret, now)
    holder = crypto.keygen()
    block = _build_block(
        index=0,
        kind=KIND_AUTHORITY,
        payload=payload,
        prev_hash=ZERO_HASH,
        chain_secret=root_secret,
        identity_secret=root_secret,
        next_holder_key=holder.public_multibase,
    )
    return ChainedToken(blocks=(block,), proof=Proof.open(holder.secret))


def _effective_grant(blocks) -> Tuple[tuple, int, str]:
    """(scope, budget_cents, expires) in force after the last delegation."""
    auth = blocks[0].payload
    scope, budget, expires = auth.scope, auth.budget_cents, auth.expires
    for block in blocks:
        if block.kind == KIND_DELEGATION:
            scope = block.payload.scope
            budget = block.payload.budget_cents
            expires = block.payload.expires
    return scope, budget, expires


def attenuate(
    token: ChainedToken,
    payload: DelegationPayload,
    delegator_secret: bytes,
    resolver: Resolver,
    now: int,
) -> ChainedToken:
    """Append a delegation block, consuming the holder secret.

    Scope, budget, and expiry must each narrow (or stay equal); a widening
    attempt fails here and, independently, at verification.
    """
    if not token.proof.is_open:
        raise SealedToken("cannot attenuate a sealed token")
    if any(b.kind == KIND_COMPLETION for b in token.blocks):
        raise InvalidPayload("cannot delegate after a completion block")
    if not isinstance(payload.context, str) or not payload.context.strip():
        raise EmptyContext("delegation context must be non-empty")
    payload.validate()

    parent_scope, parent_budget, parent_expires = _effective_grant(token.blocks)
    if not scope_subset(payload.scope, parent_scope):
        raise ScopeWidened(
            f"scope {list(payload.scope)} is not a subset of {list(parent_scope)}"
        )
    if payload.budget_cents > parent_budget:
        raise BudgetIncreased(f"{payload.budget_cents} > parent {parent_budget}")
    if parse_rfc3339(payload.expires) > parse_rfc3339(parent_expires):
        raise ExpiryExtended(f"{payload.expires} is after parent {parent_expires}")
    if token.depth + 1 > token.authority().max_depth:
        raise DepthExceeded(
            f"delegation {token.depth + 1} exceeds max_depth {token.authority().max_depth}"
        )
    _require_identity_key(resolver, payload.delegator, delegator_secret, now)

    holder = crypto.keygen()
    block = _build_block(
        index=len(token.blocks),
        kind=KIND_DELEGATION,
        payload=payload,
        prev_hash=block_hash(token.blocks[-1]),
        chain_secret=token.proof.holder_secret,
        identity_secret=delegator_secret,
        next_holder_key=holder.public_multibase,
    )
    return ChainedToken(blocks=token.blocks + (block,), proof=Proof.open(holder.secret))


def executor_id(blocks) -> str:
    """The agent entitled to record completion: last delegatee, else root."""
    for block in reversed(blocks):
        if block.kind == KIND_DELEGATION:
            return block.payload.delegatee
    return blocks[0].payload.identity


def append_completion(
    token: ChainedToken,
    payload: CompletionPayload,
    executor_secret: bytes,
    resolver: Resolver,
    now: int,
    seal: bool = False,
) -> ChainedToken:
    """Record the execution outcome; with ``seal`` the token becomes terminal."""
    if not token.proof.is_open:
        raise SealedToken("cannot append to a sealed token")
    if any(b.kind == KIND_COMPLETION for b in token.blocks):
        raise InvalidPayload("completion already recorded")
    payload.validate()

    executor = executor_id(token.blocks)
    try:
        _require_identity_key(resolver, executor, executor_secret, now)
    except (SigningKeyNotListed, IdentityUnresolvable) as exc:
        raise ExecutorMismatch(
            f"secret does not belong to executor {executor}: {exc.detail}"
        ) from exc

    holder = None if seal else crypto.keygen()
    block = _build_block(
        index=len(token.blocks),
        kind=KIND_COMPLETION,
        payload=payload,
        prev_hash=block_hash(token.blocks[-1]),
        chain_secret=token.proof.holder_secret,
        identity_secret=executor_secret,
        next_holder_key=None if holder is None else holder.public_multibase,
    )
    if seal:
        seal_sig = crypto.sign(token.proof.holder_secret, _seal_message(block, None))
        return ChainedToken(blocks=token.blocks + (block,), proof=Proof.sealed(seal_sig))
    return ChainedToken(blocks=token.blocks + (block,), proof=Proof.open(holder.secret))


def append_attestation(
    token: ChainedToken,
    payload: AttestationPayload,
    attester_secret: bytes,
    resolver: Resolver,
    now: int,
) -> ChainedToken:
    """Escalate a completion's trust level with an attestation block."""
    if not token.proof.is_open:
        raise SealedToken("cannot append to a sealed token")
    payload.validate()
    ref = payload.attested_block_index
    if not (0 <= ref < len(token.blocks)) or token.blocks[ref].kind != KIND_COMPLETION:
        raise NoSuchCompletion(f"block {ref} is not a completion block")
    _require_identity_key(resolver, payload.attester, attester_secret, now)

    holder = crypto.keygen()
    block = _build_block(
        index=len(token.blocks),
        kind=KIND_ATTESTATION,
        payload=payload,
        prev_hash=block_hash(token.blocks[-1]),
        chain_secret=token.proof.holder_secret,
        identity_secret=attester_secret,
        next_holder_key=holder.public_multibase,
    )
    return ChainedToken(blocks=token.blocks + (block,), proof=Proof.open(holder.secret))


def seal_token(token: ChainedToken, challenge: Optional[bytes] = None) -> ChainedToken:
    """Seal in place: replace the open proof with a terminal signature,
    optionally bound to a verifier challenge (presenter possession proof)."""
    if not token.proof.is_open:
        raise SealedToken("token is already sealed")
    sig = crypto.sign(token.proof.holder_secret, _seal_message(token.blocks[-1], challenge))
    return ChainedToken(blocks=token.blocks, proof=Proof.sealed(sig))


def effective_verification_status(blocks, completion_index: int) -> str:
    """Trust level of a completion after attestations are considered."""
    hop_delegator = None
    for block in blocks[:completion_index]:
        if block.kind == KIND_DELEGATION:
            hop_delegator = block.payload.delegator
    attesters = [
        b.payload.attester
        for b in blocks
        if b.kind == KIND_ATTESTATION and b.payload.attested_block_index == completion_index
    ]
    if not attesters:
        return blocks[completion_index].payload.verification_status
    if hop_delegator is not None and hop_delegator in attesters:
        return "counter_signed"
    return "third_party_attested"


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass
class RequestFacts:
    """Ground facts about the invocation being authorized."""

    tool: Optional[str] = None
    time: Optional[int] = None
    delegator_domains: Dict[str, str] = field(default_factory=dict)
    presenter_challenge: Optional[bytes] = None


@dataclass(frozen=True)
class CompletionSummary:
    status: str
    result_hash: str
    verification_status: str
    cost_usd: str
    tokens_used: int


@dataclass(frozen=True)
class ChainVerification:
    """Accepted chain: who authorized what, through whom."""

    root_id: str
    delegation_chain: tuple  # of (delegator, delegatee, context)
    effective_scope: tuple
    effective_budget_cents: int
    effective_expires: str
    depth: int
    completion: Optional[CompletionSummary] = None


def _chain_key_for(blocks, i: int, root_keys: List[bytes]) -> List[bytes]:
    if i == 0:
        return root_keys
    nh = blocks[i - 1].next_holder_key
    return [crypto.multibase_decode(nh)]


def verify_chain(
    token: ChainedToken,
    resolver: Resolver,
    facts: RequestFacts,
    now: int,
    requested_scope: Optional[str] = None,
) -> ChainVerification:
    """Full chain authorization, first failure wins.

    Order: structure; chain signatures and hash links; identity signatures;
    proof; monotone attenuation re-check (independent of attenuate-time
    enforcement); depth; expiry; contexts; budget sign; requested scope;
    policy checks from every block.
    """
    _structural_check(token)
    blocks = token.blocks

    # Chain signatures: block 0 under the resolved root identity key, block i
    # under the holder key named by block i-1; hash links alongside.
    root_payload = blocks[0].payload
    root_doc = resolver.resolve_text(root_payload.identity, now)
    root_keys = root_doc.key_bytes_valid_at(now)
    if not root_keys:
        raise KeyRevoked(f"{root_payload.identity} has no key valid at {format_rfc3339(now)}")
    for i, block in enumerate(blocks):
        expected_prev = ZERO_HASH if i == 0 else block_hash(blocks[i - 1])
        if block.prev_hash != expected_prev:
            raise SignatureInvalid(f"prev_hash mismatch at block {i}")
        message = _chain_signing_bytes(
            block.index, block.kind, block.payload.to_dict(),
            block.prev_hash, block.next_holder_key,
        )
        try:
            sig = crypto.b64url_decode(block.chain_sig)
        except Exception as exc:
            raise SignatureInvalid(f"bad chain_sig encoding at block {i}: {exc}") from exc
        keys = _chain_key_for(blocks, i, root_keys)
        if not any(crypto.verify(k, message, sig) for k in keys):
            raise SignatureInvalid(f"chain_sig does not verify at block {i}")

    # Identity signatures: every block's acting agent must be resolvable and
    # must have signed the payload hash with a key valid now.
    for i, block in enumerate(blocks):
        actor = _actor_id(blocks, i)
        doc = resolver.resolve_text(actor, now)
        keys = doc.key_bytes_valid_at(now)
        if not keys:
            raise KeyRevoked(f"{actor} has no key valid at {format_rfc3339(now)}")
        try:
            sig = crypto.b64url_decode(block.identity_sig)
        except Exception as exc:
            raise SignatureInvalid(f"bad identity_sig encoding at block {i}: {exc}") from exc
        message = _identity_signing_bytes(block.payload.to_dict())
        if not any(crypto.verify(k, message, sig) for k in keys):
            raise SignatureInvalid(f"identity_sig does not verify at block {i} ({actor})")

    # Proof of holdership / sealing.
    last = blocks[-1]
    if token.proof.is_open:
        derived = crypto.derive_public(token.proof.holder_secret)
        if crypto.multibase_decode(last.next_holder_key) != derived:
            raise SignatureInvalid("open proof secret does not match holder key")
    else:
        holder_key = last.next_holder_key or blocks[-2].next_holder_key
        message = _seal_message(last, facts.presenter_challenge)
        if not crypto.verify(crypto.multibase_decode(holder_key), message, token.proof.seal_sig):
            raise SignatureInvalid("seal signature does not verify")

    # Monotone attenuation, re-derived across all blocks (defense in depth).
    scope, budget, expires = root_payload.scope, root_payload.budget_cents, root_payload.expires
    delegation_chain = []
    for block in blocks:
        if block.kind != KIND_DELEGATION:
            continue
        p = block.payload
        if not scope_subset(p.scope, scope):
            raise ScopeInsufficient(
                f"delegation widens scope: {list(p.scope)} beyond {list(scope)}"
            )
        if p.budget_cents > budget:
            raise BudgetExceeded(f"delegation raises budget {p.budget_cents} > {budget}")
        if parse_rfc3339(p.expires) > parse_rfc3339(expires):
            raise TokenExpired(f"delegation extends expiry beyond {expires}")
        scope, budget, expires = p.scope, p.budget_cents, p.expires
        delegation_chain.append((p.delegator, p.delegatee, p.context))

    depth = len(delegation_chain)
    if depth > root_payload.max_depth:
        raise DepthExceeded(
            f"{depth} delegation blocks exceed max_depth {root_payload.max_depth}"
        )

    for block in blocks:
        block_expires = getattr(block.payload, "expires", None)
        if block_expires is not None and now > parse_rfc3339(block_expires):
            raise TokenExpired(f"block {block.index} expired at {block_expires}")

    for block in blocks:
        if block.kind == KIND_DELEGATION and not block.payload.context.strip():
            raise TokenMalformed(f"empty delegation context at block {block.index}")

    for block in blocks:
        block_budget = getattr(block.payload, "budget_cents", None)
        if block_budget is not None and block_budget < 0:
            raise BudgetExceeded(f"negative budget at block {block.index}")

    if requested_scope is not None and not scope_covers(scope, requested_scope):
        raise ScopeInsufficient(
            f"{requested_scope!r} not covered by effective scope {list(scope)}"
        )

    # Policy checks from every block, over request facts plus synthesized
    # facts for the chain's own state.
    fact_set = _build_facts(facts, now, budget, depth, delegation_chain, root_payload)
    all_checks = []
    for block in blocks:
        for text in getattr(block.payload, "checks", ()):
            all_checks.append(policy.parse_check(text))
    failed = policy.evaluate_checks(all_checks, fact_set)
    if failed is not None:
        raise _check_failure_error(failed)

    completion = None
    for i, block in enumerate(blocks):
        if block.kind == KIND_COMPLETION:
            p = block.payload
            completion = CompletionSummary(
                status=p.status,
                result_hash=p.result_hash,
                verification_status=effective_verification_status(blocks, i),
                cost_usd=p.cost_usd,
                tokens_used=p.tokens_used,
            )
    return ChainVerification(
        root_id=root_payload.identity,
        delegation_chain=tuple(delegation_chain),
        effective_scope=tuple(scope),
        effective_budget_cents=budget,
        effective_expires=expires,
        depth=depth,
        completion=completion,
    )


def _actor_id(blocks, i: int) -> str:
    block = blocks[i]
    if block.kind == KIND_AUTHORITY:
        return block.payload.identity
    if block.kind == KIND_DELEGATION:
        return block.payload.delegator
    if block.kind == KIND_ATTESTATION:
        return block.payload.attester
    return executor_id(blocks[:i])


def _build_facts(facts, now, budget, depth, delegation_chain, root_payload):
    time_value = facts.time if facts.time is not None else now
    fact_set = {
        "time": {(time_value,)},
        "budget": {(budget,)},
        "depth": {(depth,)},
    }
    if facts.tool is not None:
        fact_set["tool"] = {(strip_tool_prefix(facts.tool),)}
    delegators = {d for d, _, _ in delegation_chain}
    if delegators:
        fact_set["delegator"] = {(d,) for d in delegators}
    if facts.delegator_domains:
        fact_set["trust_domain"] = {
            (aid, dom) for aid, dom in facts.delegator_domains.items()
        }
    return fact_set


def _check_failure_error(failed: policy.FailedCheck):
    """Map a failed check to a wire code by its leading fact predicate."""
    pred = failed.check.leading_predicate()
    detail = f"check failed: {failed.check.raw!r}"
    if pred == "budget":
        return BudgetExceeded(detail)
    if pred == "depth":
        return DepthExceeded(detail)
    if pred == "time":
        return TokenExpired(detail)
    return ScopeInsufficient(detail)


# ---------------------------------------------------------------------------
# Compact -> chained upgrade
# ---------------------------------------------------------------------------

def upgrade_compact_to_chained(
    verified: VerifiedCompact,
    root_secret: bytes,
    resolver: Resolver,
    now: int,
) -> ChainedToken:
    """Re-issue a verified compact token as a one-block chained token.

    Claim mapping: iss -> authority identity, sub -> delegate intent
    (recorded in extensions), scope 1:1, budget_usd -> exact cents,
    max_depth -> max_depth, exp -> expires.
    """
    claims = verified.claims
    public = crypto.derive_public(root_secret)
    listed_now = verified.issuer_doc.key_bytes_valid_at(now)
    if public not in listed_now:
        raise NotIssuer("root_secret is not a current key of the compact issuer")
    cents = Decimal(claims.budget_usd) * 100
    if cents != cents.to_integral_value():
        raise NotRepresentable(f"budget {claims.budget_usd!r} is not whole cents")
    payload = AuthorityPayload(
        identity=claims.iss,
        scope=tuple(claims.scope),
        budget_cents=int(cents),
        max_depth=claims.max_depth,
        expires=format_rfc3339(claims.exp),
        checks=(),
        extensions={"delegate_intent": claims.sub},
    )
    return mint_authority(payload, root_secret, resolver, now)
