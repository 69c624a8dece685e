"""Adversarial evaluation matrix: six attack categories against three
verifier configurations.

Configurations:

* ``aip`` — the full pipeline (header extraction, mode detection, chain or
  compact verification). Expected to reject every attempt.
* ``unsigned`` — an accept-everything comparator modeling a deployment with
  no authentication. Rejects nothing.
* ``plain_jwt`` — a comparator that checks signature, expiry, and the scope
  claim of a standard EdDSA JWT but has no notion of delegation depth or
  context. Catches four of the six categories.

Every generator first confirms its output is rejected-by-construction
against a direct oracle for the violated rule, so a buggy generator can
never silently produce a valid token and inflate rejection counts.
Generation is fully seeded; identical seeds give identical reports.
"""

from __future__ import annotations

import json
import random
import string
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Set

from .. import bindings, chained, compact, crypto
from ..chained import (
    AuthorityPayload,
    DelegationPayload,
    _build_block,
    block_hash,
)
from ..errors import VerificationError
from ..identity import AipId, Resolver, ResolverConfig, format_rfc3339

CATEGORIES = (
    "scope_widening",
    "depth_violation",
    "expired_replay",
    "wrong_key",
    "empty_context",
    "forgery",
)

CONFIGS = ("aip", "unsigned", "plain_jwt")

# Which categories a plain-JWT deployment can even see. Depth and context
# are chained-delegation concepts with no JWT counterpart.
JWT_BLIND_CATEGORIES = ("depth_violation", "empty_context")


def _offline_resolver() -> Resolver:
    def no_fetch(url: str) -> bytes:
        raise RuntimeError("attack suite is offline")

    return Resolver(ResolverConfig(fetcher=no_fetch))


@dataclass
class JwtCase:
    """What a plain-JWT deployment would see for this attack attempt."""

    wire: str
    issuer_pub: bytes
    tool: str
    now: int


@dataclass
class AttackCase:
    """One attack attempt: presentations for the full pipeline, plus the
    JWT-deployment analog (None when the attack is invisible to JWTs)."""

    category: str
    presentations: List[dict]  # each: {"headers", "tool", "now"}
    resolver: Resolver
    jwt: Optional[JwtCase]


@dataclass
class AttackReport:
    iterations: int
    seed: int
    configs: tuple
    cells: Dict[str, Dict[str, Dict[str, int]]]  # config -> category -> counts

    def totals(self, config: str) -> Dict[str, int]:
        attempts = sum(c["attempts"] for c in self.cells[config].values())
        rejected = sum(c["rejected"] for c in self.cells[config].values())
        return {"attempts": attempts, "rejected": rejected}

    def to_dict(self) -> dict:
        return {
            "iterations_per_attack": self.iterations,
            "seed": self.seed,
            "cells": self.cells,
            "totals": {cfg: self.totals(cfg) for cfg in self.configs},
        }

    def to_table(self) -> str:
        configs = list(self.configs)
        width = max(len(c) for c in CATEGORIES) + 2
        lines = ["attack".ljust(width) + "".join(c.rjust(12) for c in configs)]
        for cat in CATEGORIES:
            row = cat.ljust(width)
            for cfg in configs:
                cell = self.cells[cfg].get(cat)
                row += (f"{cell['rejected']}/{cell['attempts']}" if cell else "-").rjust(12)
            lines.append(row)
        total_row = "total".ljust(width)
        for cfg in configs:
            t = self.totals(cfg)
            total_row += f"{t['rejected']}/{t['attempts']}".rjust(12)
        lines.append(total_row)
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Generators (one per category)
# ---------------------------------------------------------------------------

def _keypair(rng: random.Random) -> crypto.KeyPair:
    return crypto.keygen(rng.randbytes(32))


def _key_id(kp: crypto.KeyPair) -> str:
    return str(AipId.for_public_key(kp.public))


def _headers(wire: str) -> dict:
    return {bindings.DEFAULT_TOKEN_HEADER: wire}


def _mint_chain(
    rng: random.Random,
    resolver: Resolver,
    now: int,
    scope=("tool:search",),
    budget=100,
    max_depth=3,
    expires_delta=600,
):
    root = _keypair(rng)
    payload = AuthorityPayload(
        identity=_key_id(root),
        scope=tuple(scope),
        budget_cents=budget,
        max_depth=max_depth,
        expires=format_rfc3339(now + expires_delta),
    )
    token = chained.mint_authority(payload, root.secret, resolver, now)
    return root, token


def forge_append(
    token: chained.ChainedToken,
    kind: str,
    payload,
    identity_secret: bytes,
    sealed: bool = False,
) -> chained.ChainedToken:
    """Append a block using the raw holder secret, bypassing every
    attenuate-time check. This is what a malicious holder can always do;
    verify_chain must still reject rule-violating results."""
    holder = crypto.keygen()
    block = _build_block(
        index=len(token.blocks),
        kind=kind,
        payload=payload,
        prev_hash=block_hash(token.blocks[-1]),
        chain_secret=token.proof.holder_secret,
        identity_secret=identity_secret,
        next_holder_key=None if sealed else holder.public_multibase,
    )
    if sealed:
        seal_sig = crypto.sign(
            token.proof.holder_secret,
            crypto.sha256(crypto.canonicalize(block.to_dict())),
        )
        return chained.ChainedToken(token.blocks + (block,), chained.Proof.sealed(seal_sig))
    return chained.ChainedToken(token.blocks + (block,), chained.Proof.open(holder.secret))


def _gen_scope_widening(rng, resolver, now) -> AttackCase:
    issuer = _keypair(rng)
    claims = compact.CompactClaims(
        iss=_key_id(issuer), sub=_key_id(_keypair(rng)),
        scope=("tool:search",), budget_usd="1.00", max_depth=3,
        iat=now - 10, exp=now + 600,
    )
    jwt_wire = compact.create_compact(claims, issuer.secret)
    _, chain_token = _mint_chain(rng, resolver, now, scope=("tool:search",))
    requested = "tool:email"
    assert not chained.scope_covers(claims.scope, requested)  # oracle
    return AttackCase(
        category="scope_widening",
        presentations=[
            {"headers": _headers(jwt_wire), "tool": requested, "now": now},
            {"headers": _headers(chained.serialize(chain_token)), "tool": requested, "now": now},
        ],
        resolver=resolver,
        jwt=JwtCase(wire=jwt_wire, issuer_pub=issuer.public, tool=requested, now=now),
    )


def _gen_depth_violation(rng, resolver, now) -> AttackCase:
    root, token = _mint_chain(
        rng, resolver, now, scope=("tool:search", "delegate:*"), max_depth=1
    )
    agent_b = _keypair(rng)
    hop1 = DelegationPayload(
        delegator=_key_id(root), delegatee=_key_id(agent_b),
        scope=("tool:search",), budget_cents=50,
        expires=format_rfc3339(now + 600), context="first hop",
    )
    token = chained.attenuate(token, hop1, root.secret, resolver, now)
    # Agent B forges a second hop past max_depth=1 with the keys it holds.
    agent_c = _keypair(rng)
    hop2 = DelegationPayload(
        delegator=_key_id(agent_b), delegatee=_key_id(agent_c),
        scope=("tool:search",), budget_cents=10,
        expires=format_rfc3339(now + 600), context="too deep",
    )
    forged = forge_append(token, chained.KIND_DELEGATION, hop2, agent_b.secret)
    assert forged.depth > forged.authority().max_depth  # oracle

    # JWT deployments express re-delegation as re-issuance; nothing to catch.
    sub_claims = compact.CompactClaims(
        iss=_key_id(agent_b), sub=_key_id(agent_c),
        scope=("tool:search",), budget_usd="0.10", max_depth=0,
        iat=now - 5, exp=now + 600,
    )
    jwt_wire = compact.create_compact(sub_claims, agent_b.secret)
    return AttackCase(
        category="depth_violation",
        presentations=[
            {"headers": _headers(chained.serialize(forged)), "tool": "tool:search", "now": now},
        ],
        resolver=resolver,
        jwt=JwtCase(wire=jwt_wire, issuer_pub=agent_b.public, tool="tool:search", now=now),
    )


def _gen_expired_replay(rng, resolver, now) -> AttackCase:
    issuer = _keypair(rng)
    claims = compact.CompactClaims(
        iss=_key_id(issuer), sub=_key_id(_keypair(rng)),
        scope=("tool:search",), budget_usd="1.00", max_depth=3,
        iat=now - 120, exp=now - 60,
    )
    jwt_wire = compact.create_compact(claims, issuer.secret)
    _, chain_token = _mint_chain(rng, resolver, now, expires_delta=-60)
    assert claims.exp < now  # oracle
    return AttackCase(
        category="expired_replay",
        presentations=[
            {"headers": _headers(jwt_wire), "tool": "tool:search", "now": now},
            {"headers": _headers(chained.serialize(chain_token)), "tool": "tool:search", "now": now},
        ],
        resolver=resolver,
        jwt=JwtCase(wire=jwt_wire, issuer_pub=issuer.public, tool="tool:search", now=now),
    )


def _gen_wrong_key(rng, resolver, now) -> AttackCase:
    attacker = _keypair(rng)
    victim = _keypair(rng)
    assert attacker.public != victim.public  # oracle
    claims = compact.CompactClaims(
        iss=_key_id(victim), sub=_key_id(_keypair(rng)),
        scope=("tool:search",), budget_usd="1.00", max_depth=3,
        iat=now - 10, exp=now + 600,
    )
    jwt_wire = compact.create_compact(claims, attacker.secret)

    payload = AuthorityPayload(
        identity=_key_id(victim), scope=("tool:search",), budget_cents=100,
        max_depth=3, expires=format_rfc3339(now + 600),
    )
    holder = crypto.keygen()
    block = _build_block(
        index=0, kind=chained.KIND_AUTHORITY, payload=payload,
        prev_hash=chained.ZERO_HASH, chain_secret=attacker.secret,
        identity_secret=attacker.secret, next_holder_key=holder.public_multibase,
    )
    forged = chained.ChainedToken((block,), chained.Proof.open(holder.secret))
    return AttackCase(
        category="wrong_key",
        presentations=[
            {"headers": _headers(jwt_wire), "tool": "tool:search", "now": now},
            {"headers": _headers(chained.serialize(forged)), "tool": "tool:search", "now": now},
        ],
        resolver=resolver,
        jwt=JwtCase(wire=jwt_wire, issuer_pub=victim.public, tool="tool:search", now=now),
    )


def _gen_empty_context(rng, resolver, now) -> AttackCase:
    root, token = _mint_chain(rng, resolver, now, scope=("tool:search",))
    delegatee = _keypair(rng)
    payload = DelegationPayload(
        delegator=_key_id(root), delegatee=_key_id(delegatee),
        scope=("tool:search",), budget_cents=50,
        expires=format_rfc3339(now + 600),
        context=rng.choice(["", " ", "\t", "  "]),
    )
    forged = forge_append(token, chained.KIND_DELEGATION, payload, root.secret)
    assert not payload.context.strip()  # oracle

    issuer = _keypair(rng)
    silent = compact.CompactClaims(
        iss=_key_id(issuer), sub=_key_id(delegatee),
        scope=("tool:search",), budget_usd="0.50", max_depth=3,
        iat=now - 5, exp=now + 600,
    )
    jwt_wire = compact.create_compact(silent, issuer.secret)
    return AttackCase(
        category="empty_context",
        presentations=[
            {"headers": _headers(chained.serialize(forged)), "tool": "tool:search", "now": now},
        ],
        resolver=resolver,
        jwt=JwtCase(wire=jwt_wire, issuer_pub=issuer.public, tool="tool:search", now=now),
    )


def _mutate_one_char(rng: random.Random, wire: str) -> str:
    pos = rng.randrange(len(wire))
    alphabet = string.ascii_letters + string.digits + "-_.{}[]\":, "
    new = rng.choice(alphabet)
    while new == wire[pos]:
        new = rng.choice(alphabet)
    return wire[:pos] + new + wire[pos + 1:]


def _gen_forgery(rng, resolver, now) -> AttackCase:
    issuer = _keypair(rng)
    claims = compact.CompactClaims(
        iss=_key_id(issuer), sub=_key_id(_keypair(rng)),
        scope=("tool:search",), budget_usd="1.00", max_depth=3,
        iat=now - 10, exp=now + 600,
    )
    jwt_wire = compact.create_compact(claims, issuer.secret)
    _, chain_token = _mint_chain(rng, resolver, now)
    chain_wire = chained.serialize(chain_token)
    mutated_jwt = _mutate_one_char(rng, jwt_wire)
    mutated_chain = _mutate_one_char(rng, chain_wire)
    assert mutated_jwt != jwt_wire and mutated_chain != chain_wire  # oracle
    return AttackCase(
        category="forgery",
        presentations=[
            {"headers": _headers(mutated_jwt), "tool": "tool:search", "now": now},
            {"headers": _headers(mutated_chain), "tool": "tool:search", "now": now},
        ],
        resolver=resolver,
        jwt=JwtCase(wire=mutated_jwt, issuer_pub=issuer.public, tool="tool:search", now=now),
    )


_GENERATORS = {
    "scope_widening": _gen_scope_widening,
    "depth_violation": _gen_depth_violation,
    "expired_replay": _gen_expired_replay,
    "wrong_key": _gen_wrong_key,
    "empty_context": _gen_empty_context,
    "forgery": _gen_forgery,
}


# ---------------------------------------------------------------------------
# Verifier configurations
# ---------------------------------------------------------------------------

def _aip_rejects(case: AttackCase) -> bool:
    """Full pipeline; an attack with several applicable modes counts as
    rejected only if every mode rejects it (worst case)."""
    cfg = bindings.BindingConfig()
    for p in case.presentations:
        try:
            bindings.verify_request(p["headers"], p["tool"], cfg, case.resolver, p["now"])
            return False  # accepted: attack succeeded in this mode
        except VerificationError:
            continue
    return True


def _unsigned_rejects(case: AttackCase) -> bool:
    return False  # no authentication layer: everything is accepted


def _plain_jwt_rejects(case: AttackCase) -> bool:
    """Signature + expiry + scope-claim check; depth and context invisible."""
    jwt = case.jwt
    if jwt is None:
        return False
    parts = jwt.wire.split(".")
    if len(parts) != 3:
        return True  # unparseable: rejected
    try:
        header = json.loads(crypto.b64url_decode(parts[0]).decode("utf-8"))
        claims = json.loads(crypto.b64url_decode(parts[1]).decode("utf-8"))
        sig = crypto.b64url_decode(parts[2])
    except Exception:
        return True
    if header.get("alg") != "EdDSA":
        return True
    message = f"{parts[0]}.{parts[1]}".encode("ascii")
    if not crypto.verify(jwt.issuer_pub, message, sig):
        return True
    if not isinstance(claims.get("exp"), int) or jwt.now > claims["exp"]:
        return True
    scope = claims.get("scope") or []
    if jwt.tool not in scope:
        return True
    return False


_VERIFIERS = {
    "aip": _aip_rejects,
    "unsigned": _unsigned_rejects,
    "plain_jwt": _plain_jwt_rejects,
}


def run_attack_suite(
    iterations_per_attack: int = 100,
    configs: Optional[Set[str]] = None,
    seed: int = 7,
    now: Optional[int] = None,
) -> AttackReport:
    """Run the six-category matrix; deterministic for a given seed."""
    if iterations_per_attack < 1:
        raise ValueError("iterations_per_attack must be >= 1")
    chosen = tuple(c for c in CONFIGS if configs is None or c in configs)
    rng = random.Random(seed)
    now = int(time.time()) if now is None else now
    resolver = _offline_resolver()

    cells = {cfg: {cat: {"attempts": 0, "rejected": 0} for cat in CATEGORIES}
             for cfg in chosen}
    for cat in CATEGORIES:
        generator = _GENERATORS[cat]
        for _ in range(iterations_per_attack):
            case = generator(rng, resolver, now)
            for cfg in chosen:
                cells[cfg][cat]["attempts"] += 1
                if _VERIFIERS[cfg](case):
                    cells[cfg][cat]["rejected"] += 1
    return AttackReport(
        iterations=iterations_per_attack, seed=seed, configs=chosen, cells=cells
    )
