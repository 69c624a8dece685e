"""Five-step end-to-end delegation walkthrough over a real loopback server.

1. Identity publication: the research specialist's document is served at its
   well-known path and resolves.
2. Authority token: a human-side system mints a 500-cent, depth-3, 30-minute
   chained grant for search and email.
3. Delegation: the orchestrator narrows to [tool:search] at 100 cents with a
   research context string.
4. Tool call: the specialist presents the token over HTTP; the server
   verifies the chain and answers.
5. Completion: the specialist appends a self-reported completion block
   recording the result hash and cost, sealing the token.
"""

from __future__ import annotations

import http.client
import json
import time
import urllib.parse
from typing import Callable, Dict

from .. import bindings, chained, crypto
from ..errors import AipError
from ..identity import (
    IdentityDocument,
    PublicKeyEntry,
    Resolver,
    ResolverConfig,
    format_rfc3339,
    parse_aip_id,
    sign_document,
    well_known_url,
)
from ..server import DemoToolServer

HUMAN_SYSTEM = "aip:web:acme.dev/human-system"
ORCHESTRATOR = "aip:web:acme.dev/orchestrator"
SPECIALIST = "aip:web:jamjet.dev/agents/research-analyst"
CONTEXT = "research query: climate policy trends"


def _loopback_fetcher(base_url: str) -> Callable[[str], bytes]:
    """Resolve any https well-known URL against the local demo server."""

    def fetch(url: str) -> bytes:
        parsed = urllib.parse.urlsplit(url)
        local = urllib.parse.urlsplit(base_url)
        conn = http.client.HTTPConnection(local.hostname, local.port, timeout=5)
        try:
            conn.request("GET", parsed.path)
            resp = conn.getresponse()
            body = resp.read()
            if resp.status != 200:
                raise RuntimeError(f"{resp.status} for {url}")
            return body
        finally:
            conn.close()

    return fetch


def _make_identity(id_text: str, now: int):
    kp = crypto.keygen()
    entry = PublicKeyEntry(
        id="key-1",
        public_key_multibase=kp.public_multibase,
        valid_from=format_rfc3339(now - 60),
        valid_until=format_rfc3339(now + 90 * 86400),
    )
    doc = IdentityDocument(
        id=id_text,
        public_keys=(entry,),
        expires=format_rfc3339(now + 30 * 86400),
        protocols={"mcp": {"header": bindings.DEFAULT_TOKEN_HEADER, "require_aip": True},
                   "a2a": {"agent_card_field": bindings.AGENT_CARD_FIELD}},
    )
    return kp, sign_document(doc, kp.secret)


def run_walkthrough(
    delegation_budget_cents: int = 100,
    delegation_context: str = CONTEXT,
) -> Dict:
    """Run all five steps; returns a report with per-step pass/fail.

    The delegation knobs exist to demonstrate failure surfacing: a budget
    above the authority's 500-cent ceiling fails step 3 with BudgetIncreased,
    an empty context fails it with EmptyContext.
    """
    now = int(time.time())
    steps = []
    token_wire = None

    ids = {name: name for name in (HUMAN_SYSTEM, ORCHESTRATOR, SPECIALIST)}
    keys, docs = {}, {}
    for id_text in ids:
        kp, doc = _make_identity(id_text, now)
        keys[id_text] = kp
        docs[id_text] = doc

    bootstrap_resolver = Resolver(ResolverConfig(fetcher=lambda url: b""))
    server = DemoToolServer(resolver=bootstrap_resolver, require_auth=True)
    server.start()
    try:
        resolver = Resolver(ResolverConfig(fetcher=_loopback_fetcher(server.base_url)))
        server.resolver = resolver  # server verifies against its own documents

        # Step 1: publication and resolution.
        try:
            for id_text, doc in docs.items():
                url = well_known_url(parse_aip_id(id_text))
                path = urllib.parse.urlsplit(url).path
                server.publish_document(path, json.dumps(doc.to_dict()).encode("utf-8"))
            resolved = resolver.resolve(parse_aip_id(SPECIALIST), now)
            ok = resolved.id == SPECIALIST
            steps.append(_step(1, "identity publication", ok,
                               f"resolved {SPECIALIST} from well-known path"))
        except Exception as exc:
            steps.append(_step(1, "identity publication", False, str(exc)))
            return {"steps": _pad(steps), "token": None}

        # Step 2: authority token (500 cents, depth 3, 30 minutes).
        try:
            payload = chained.AuthorityPayload(
                identity=HUMAN_SYSTEM,
                scope=("tool:search", "tool:email"),
                budget_cents=500,
                max_depth=3,
                expires=format_rfc3339(now + 1800),
            )
            token = chained.mint_authority(payload, keys[HUMAN_SYSTEM].secret, resolver, now)
            steps.append(_step(2, "authority token", True,
                               "minted 500 cents / depth 3 / 30 min grant"))
        except AipError as exc:
            steps.append(_step(2, "authority token", False,
                               f"{type(exc).__name__}: {exc.detail}"))
            return {"steps": _pad(steps), "token": None}

        # Step 3: orchestrator delegates to the specialist.
        try:
            delegation = chained.DelegationPayload(
                delegator=ORCHESTRATOR,
                delegatee=SPECIALIST,
                scope=("tool:search",),
                budget_cents=delegation_budget_cents,
                expires=format_rfc3339(now + 1800),
                context=delegation_context,
            )
            token = chained.attenuate(token, delegation, keys[ORCHESTRATOR].secret, resolver, now)
            steps.append(_step(3, "delegation", True,
                               f"narrowed to [tool:search] at {delegation_budget_cents} cents"))
        except AipError as exc:
            steps.append(_step(3, "delegation", False,
                               f"{type(exc).__name__}: {exc.detail}"))
            return {"steps": _pad(steps), "token": None}

        # Step 4: specialist calls the tool over HTTP with the token header.
        try:
            wire = chained.serialize(token)
            conn = http.client.HTTPConnection("127.0.0.1", server.port, timeout=10)
            body = json.dumps({"query": "climate policy trends"})
            conn.request(
                "POST", "/tools/search", body=body,
                headers={bindings.DEFAULT_TOKEN_HEADER: wire,
                         "Content-Type": "application/json"},
            )
            resp = conn.getresponse()
            result_bytes = resp.read()
            conn.close()
            answer = json.loads(result_bytes)
            ok = resp.status == 200 and answer.get("results")
            steps.append(_step(4, "tool call over HTTP", bool(ok),
                               f"status {resp.status}, verified as {answer.get('verified_id')}"))
            if not ok:
                return {"steps": _pad(steps), "token": None}
        except Exception as exc:
            steps.append(_step(4, "tool call over HTTP", False, str(exc)))
            return {"steps": _pad(steps), "token": None}

        # Step 5: completion block, self-reported, sealed.
        try:
            completion = chained.CompletionPayload(
                status="completed",
                result_hash=f"sha256:{crypto.sha256_hex(result_bytes)}",
                cost_usd="0.03",
                tokens_used=1200,
            )
            token = chained.append_completion(
                token, completion, keys[SPECIALIST].secret, resolver, now, seal=True
            )
            token_wire = chained.serialize(token)
            kinds = [b.kind for b in token.blocks]
            status = chained.effective_verification_status(token.blocks, len(token.blocks) - 1)
            ok = kinds == ["authority", "delegation", "completion"] and status == "self_reported"
            steps.append(_step(5, "completion", ok,
                               f"blocks {kinds}, verification_status {status}"))
        except AipError as exc:
            steps.append(_step(5, "completion", False,
                               f"{type(exc).__name__}: {exc.detail}"))
    finally:
        server.stop()

    return {"steps": _pad(steps), "token": token_wire}


def _step(n, name, ok, detail):
    return {"n": n, "name": name, "ok": bool(ok), "detail": detail}


def _pad(steps):
    have = {s["n"] for s in steps}
    names = {1: "identity publication", 2: "authority token", 3: "delegation",
             4: "tool call over HTTP", 5: "completion"}
    for n in range(1, 6):
        if n not in have:
            steps.append(_step(n, names[n], False, "not reached"))
    return sorted(steps, key=lambda s: s["n"])
