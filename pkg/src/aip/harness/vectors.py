"""Self-contained conformance vectors.

Each vector file carries everything a verifier needs — header map, requested
tool, clock value, and the identity documents the resolver would fetch — plus
the expected outcome ("accept" or an error code; a list means any listed code
is conformant). The corpus shape and every expected outcome are deterministic
(fixed seed and clock); holder keys inside tokens are freshly generated, so
wires differ between emissions while verdicts never do.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import List

from .. import bindings, chained, compact, crypto
from ..chained import AuthorityPayload, DelegationPayload, _build_block, block_hash
from ..errors import VerificationError
from ..identity import (
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

# 2026-06-01T00:00:00Z: every vector replays at this instant.
VECTOR_NOW = 1780272000
VECTOR_SEED = 13


class _Builder:
    def __init__(self):
        self.rng = random.Random(VECTOR_SEED)
        self.now = VECTOR_NOW
        self.resolver = Resolver(
            ResolverConfig(fetcher=lambda url: (_ for _ in ()).throw(RuntimeError("offline")))
        )
        self.vectors: List[dict] = []

    def keypair(self) -> crypto.KeyPair:
        return crypto.keygen(self.rng.randbytes(32))

    def key_id(self, kp: crypto.KeyPair) -> str:
        return str(AipId.for_public_key(kp.public))

    def add(self, name, expected, headers, tool="tool:search", documents=None, note=""):
        self.vectors.append({
            "name": name,
            "expected": expected,
            "now": self.now,
            "tool": tool,
            "headers": headers,
            "documents": documents or {},
            "note": note,
        })

    def claims(self, issuer_id, subject_id, **overrides) -> compact.CompactClaims:
        base = dict(
            iss=issuer_id, sub=subject_id, scope=("tool:search",),
            budget_usd="1.00", max_depth=3, iat=self.now - 60, exp=self.now + 600,
        )
        base.update(overrides)
        return compact.CompactClaims(**base)

    def chain(self, depth: int, scope=("tool:search",), authority_scope=None,
              max_depth=3, expires_delta=600):
        root = self.keypair()
        payload = AuthorityPayload(
            identity=self.key_id(root),
            scope=tuple(authority_scope or scope),
            budget_cents=200,
            max_depth=max_depth,
            expires=format_rfc3339(self.now + expires_delta),
        )
        token = chained.mint_authority(payload, root.secret, self.resolver, self.now)
        prev_kp = root
        for d in range(1, depth + 1):
            nxt = self.keypair()
            delegation = DelegationPayload(
                delegator=self.key_id(prev_kp), delegatee=self.key_id(nxt),
                scope=tuple(scope), budget_cents=max(10, 200 - 50 * d),
                expires=format_rfc3339(self.now + expires_delta),
                context=f"vector hop {d}",
            )
            token = chained.attenuate(token, delegation, prev_kp.secret, self.resolver, self.now)
            prev_kp = nxt
        return root, prev_kp, token

    def forge(self, token, kind, payload, identity_secret):
        holder = crypto.keygen(self.rng.randbytes(32))
        block = _build_block(
            index=len(token.blocks), kind=kind, payload=payload,
            prev_hash=block_hash(token.blocks[-1]),
            chain_secret=token.proof.holder_secret,
            identity_secret=identity_secret,
            next_holder_key=holder.public_multibase,
        )
        return chained.ChainedToken(token.blocks + (block,), chained.Proof.open(holder.secret))

    def web_doc(self, domain, path, kp, key_from_delta, key_until_delta):
        aid = AipId.web(domain, path)
        entry = PublicKeyEntry(
            id="key-1", public_key_multibase=kp.public_multibase,
            valid_from=format_rfc3339(self.now + key_from_delta),
            valid_until=format_rfc3339(self.now + key_until_delta),
        )
        doc = sign_document(
            IdentityDocument(id=str(aid), public_keys=(entry,),
                             expires=format_rfc3339(self.now + 7 * 86400)),
            kp.secret,
        )
        return aid, {well_known_url(aid): doc.to_dict()}


def _token_header(wire: str) -> dict:
    return {bindings.DEFAULT_TOKEN_HEADER: wire}


def build_vectors() -> List[dict]:
    b = _Builder()
    issuer = b.keypair()
    subject = b.keypair()
    issuer_id, subject_id = b.key_id(issuer), b.key_id(subject)

    # --- compact ---
    valid_wire = compact.create_compact(b.claims(issuer_id, subject_id), issuer.secret)
    b.add("compact_valid", "accept", _token_header(valid_wire),
          note="plain single-hop grant")

    expired = compact.create_compact(
        b.claims(issuer_id, subject_id, iat=b.now - 120, exp=b.now - 60), issuer.secret
    )
    b.add("compact_expired", "TOKEN_EXPIRED", _token_header(expired),
          note="exp is 60 s in the past")

    attacker = b.keypair()
    wrong_key = compact.create_compact(b.claims(issuer_id, subject_id), attacker.secret)
    b.add("compact_wrong_key", "SIGNATURE_INVALID", _token_header(wrong_key),
          note="signed by an unrelated key")

    flipped = _flip_signature_char(valid_wire)
    b.add("compact_sig_flip", ["SIGNATURE_INVALID", "TOKEN_MALFORMED"],
          _token_header(flipped), note="one character of the signature changed")

    b.add("compact_scope", "SCOPE_INSUFFICIENT", _token_header(valid_wire),
          tool="tool:email", note="tool:email requested, only tool:search granted")

    b.add("compact_malformed", "TOKEN_MALFORMED", _token_header("not-a-token"),
          note="garbage token text")

    b.add("token_missing", "TOKEN_MISSING", {}, note="no token headers at all")

    auth_scheme = {"Authorization": f"AIP {valid_wire}"}
    b.add("compact_authorization_scheme", "accept", auth_scheme,
          note="token carried in Authorization with the AIP scheme")

    # unresolvable web issuer: no document provided
    web_kp = b.keypair()
    web_id, web_docs = b.web_doc("vectors.example", "agents/a", web_kp, -3600, 86400)
    missing_doc_wire = compact.create_compact(
        b.claims(str(web_id), subject_id), web_kp.secret
    )
    b.add("identity_unresolvable", "IDENTITY_UNRESOLVABLE",
          _token_header(missing_doc_wire), documents={},
          note="web issuer with no published document")

    # revoked: document resolves but no key window covers `now`
    revoked_kp = b.keypair()
    revoked_id, revoked_docs = b.web_doc("vectors.example", "agents/old", revoked_kp,
                                         -7200, -3600)
    revoked_wire = compact.create_compact(
        b.claims(str(revoked_id), subject_id), revoked_kp.secret
    )
    b.add("key_revoked", "KEY_REVOKED", _token_header(revoked_wire),
          documents=revoked_docs, note="all key validity windows are in the past")

    # --- chained, valid shapes ---
    for depth in range(4):
        _, _, token = b.chain(depth)
        b.add(f"chained_valid_depth{depth}", "accept",
              _token_header(chained.serialize(token)),
              note=f"open token with {depth} delegation block(s)")

    root, executor, token = b.chain(1)
    completion = chained.CompletionPayload(
        status="completed",
        result_hash="sha256:" + "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        cost_usd="0.05", tokens_used=420,
    )
    sealed = chained.append_completion(
        token, completion, executor.secret, b.resolver, b.now, seal=True
    )
    b.add("chained_sealed", "accept", _token_header(chained.serialize(sealed)),
          note="sealed token with a completion block")

    _, _, wildcard = b.chain(1, scope=("tool:search",), authority_scope=("tool:*",))
    b.add("chained_wildcard", "accept", _token_header(chained.serialize(wildcard)),
          note="tool:* authority attenuated to a concrete tool")

    # --- chained, forged violations ---
    root, holder_kp, token = b.chain(1, max_depth=1)
    extra = DelegationPayload(
        delegator=b.key_id(holder_kp), delegatee=b.key_id(b.keypair()),
        scope=("tool:search",), budget_cents=10,
        expires=format_rfc3339(b.now + 600), context="one hop too many",
    )
    forged_depth = b.forge(token, chained.KIND_DELEGATION, extra, holder_kp.secret)
    b.add("chained_depth_exceeded", "DEPTH_EXCEEDED",
          _token_header(chained.serialize(forged_depth)),
          note="second delegation forged past max_depth=1")

    root, holder_kp, token = b.chain(0)
    raised = DelegationPayload(
        delegator=b.key_id(root), delegatee=b.key_id(b.keypair()),
        scope=("tool:search",), budget_cents=10_000,
        expires=format_rfc3339(b.now + 600), context="budget grab",
    )
    forged_budget = b.forge(token, chained.KIND_DELEGATION, raised, root.secret)
    b.add("chained_budget_raised", "BUDGET_EXCEEDED",
          _token_header(chained.serialize(forged_budget)),
          note="delegation raises the ceiling from 200 to 10000 cents")

    root, holder_kp, token = b.chain(0)
    widened = DelegationPayload(
        delegator=b.key_id(root), delegatee=b.key_id(b.keypair()),
        scope=("tool:search", "tool:email"), budget_cents=50,
        expires=format_rfc3339(b.now + 600), context="scope grab",
    )
    forged_scope = b.forge(token, chained.KIND_DELEGATION, widened, root.secret)
    b.add("chained_scope_widened", "SCOPE_INSUFFICIENT",
          _token_header(chained.serialize(forged_scope)),
          note="delegation adds tool:email that block 0 never granted")

    _, _, expired_chain = b.chain(0, expires_delta=-60)
    b.add("chained_expired", "TOKEN_EXPIRED",
          _token_header(chained.serialize(expired_chain)),
          note="authority expiry 60 s in the past")

    root, holder_kp, token = b.chain(0)
    anonymous = DelegationPayload(
        delegator=b.key_id(root), delegatee=b.key_id(b.keypair()),
        scope=("tool:search",), budget_cents=50,
        expires=format_rfc3339(b.now + 600), context="   ",
    )
    forged_context = b.forge(token, chained.KIND_DELEGATION, anonymous, root.secret)
    b.add("chained_empty_context", "TOKEN_MALFORMED",
          _token_header(chained.serialize(forged_context)),
          note="delegation context is whitespace only (audit evasion)")

    _, _, token = b.chain(1)
    wire = chained.serialize(token)
    pos = wire.index('"chain_sig":"') + len('"chain_sig":"') + 5
    flipped_chain = wire[:pos] + ("A" if wire[pos] != "A" else "B") + wire[pos + 1:]
    b.add("chained_byte_flip", ["SIGNATURE_INVALID", "TOKEN_MALFORMED"],
          _token_header(flipped_chain), note="one byte of a chain signature changed")

    root, _, token = b.chain(0)
    stranger = crypto.keygen(b.rng.randbytes(32))
    stolen = chained.ChainedToken(token.blocks, chained.Proof.open(stranger.secret))
    b.add("chained_wrong_holder", "SIGNATURE_INVALID",
          _token_header(chained.serialize(stolen)),
          note="open proof secret does not match the holder key")

    # negative budget, forged directly into an authority block
    neg_root = b.keypair()
    neg_payload = AuthorityPayload(
        identity=b.key_id(neg_root), scope=("tool:search",), budget_cents=-1,
        max_depth=3, expires=format_rfc3339(b.now + 600),
    )
    holder = crypto.keygen(b.rng.randbytes(32))
    neg_block = _build_block(
        index=0, kind=chained.KIND_AUTHORITY, payload=neg_payload,
        prev_hash=chained.ZERO_HASH, chain_secret=neg_root.secret,
        identity_secret=neg_root.secret, next_holder_key=holder.public_multibase,
    )
    neg_token = chained.ChainedToken((neg_block,), chained.Proof.open(holder.secret))
    b.add("chained_negative_budget", "BUDGET_EXCEEDED",
          _token_header(chained.serialize(neg_token)),
          note="authority declares budget_cents = -1")

    # compact -> chained upgrade mapping
    verified = compact.verify_compact(valid_wire, b.resolver, b.now)
    upgraded = chained.upgrade_compact_to_chained(verified, issuer.secret, b.resolver, b.now)
    b.add("chained_upgraded_from_compact", "accept",
          _token_header(chained.serialize(upgraded)),
          note="authority block carries the Table-style claim mapping")

    # oversize inline token
    root, holder_kp, token = b.chain(0, authority_scope=("tool:*",))
    big = DelegationPayload(
        delegator=b.key_id(root), delegatee=b.key_id(b.keypair()),
        scope=("tool:search",), budget_cents=50,
        expires=format_rfc3339(b.now + 600), context="x" * 4200,
    )
    big_token = chained.attenuate(token, big, root.secret, b.resolver, b.now)
    b.add("oversize_inline_token", "TOKEN_MALFORMED",
          _token_header(chained.serialize(big_token)),
          note="inline token above the 4 KB limit; reference header required")

    return b.vectors


def _flip_signature_char(wire: str) -> str:
    head, _, sig = wire.rpartition(".")
    mid = len(sig) // 2
    replacement = "A" if sig[mid] != "A" else "B"
    return f"{head}.{sig[:mid]}{replacement}{sig[mid + 1:]}"


def emit_conformance_vectors(directory) -> List[str]:
    """Write the vector corpus; returns the emitted file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, vector in enumerate(build_vectors()):
        name = f"{i:02d}_{vector['name']}.json"
        (directory / name).write_text(
            json.dumps(vector, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        names.append(name)
    return names


def check_conformance_vectors(directory) -> List[dict]:
    """Replay every vector; returns per-vector outcomes."""
    directory = Path(directory)
    results = []
    for path in sorted(directory.glob("*.json")):
        vector = json.loads(path.read_text(encoding="utf-8"))
        got = _run_vector(vector)
        expected = vector["expected"]
        allowed = expected if isinstance(expected, list) else [expected]
        results.append({
            "name": vector["name"],
            "file": path.name,
            "expected": expected,
            "got": got,
            "ok": got in allowed,
        })
    return results


def _run_vector(vector: dict) -> str:
    documents = {
        url: json.dumps(doc).encode("utf-8")
        for url, doc in vector.get("documents", {}).items()
    }
    resolver = Resolver(ResolverConfig(fetcher=dict_fetcher(documents)))
    try:
        bindings.verify_request(
            vector["headers"], vector["tool"], bindings.BindingConfig(),
            resolver, vector["now"],
        )
        return "accept"
    except VerificationError as err:
        return err.code.value
