"""Operator CLI: key and identity management, token lifecycle, inspection,
verification, the end-to-end walkthrough, benchmarks, the attack suite,
conformance vectors, and the demo server.

Exit codes: 0 success, 1 protocol error (error code name on stderr),
2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import bindings, chained, compact, crypto, policy
from .errors import AipError, VerificationError
from .identity import (
    IdentityDocument,
    PublicKeyEntry,
    Resolver,
    ResolverConfig,
    fixture_fetcher,
    format_rfc3339,
    http_fetcher,
    parse_aip_id,
    sign_document,
    verify_document,
)

PROTOCOL_ERROR_EXIT = 1


def _key_dir(args) -> Path:
    if getattr(args, "key_dir", None):
        return Path(args.key_dir)
    return Path(os.environ.get("AIP_KEY_DIR", "."))


def _resolver(args) -> Resolver:
    if getattr(args, "fixture_dir", None):
        fetcher = fixture_fetcher(args.fixture_dir)
    else:
        fetcher = http_fetcher()
    return Resolver(ResolverConfig(fetcher=fetcher))


def _now(args) -> int:
    if getattr(args, "now", None):
        from .identity import parse_rfc3339

        return parse_rfc3339(args.now)
    return int(time.time())


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "output", "text") == "json":
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(text)


def _read_token_arg(value: str) -> str:
    """Token argument: literal wire, '@file', or '-' for stdin."""
    if value == "-":
        return sys.stdin.read().strip()
    if value.startswith("@"):
        return Path(value[1:]).read_text(encoding="utf-8").strip()
    return value


def _load_secret(path) -> bytes:
    kp = crypto.load_key_file(path)
    if kp.secret is None:
        raise AipError(f"key file {path} has no secret seed")
    return kp.secret


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_keygen(args) -> int:
    seed = bytes.fromhex(args.seed_hex) if args.seed_hex else None
    kp = crypto.keygen(seed)
    out = Path(args.out) if args.out else _key_dir(args) / "aip_key.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    crypto.save_key_file(out, kp)
    payload = {"key_file": str(out), "public_key_multibase": kp.public_multibase,
               "key_id": f"aip:key:ed25519:{kp.public_multibase}"}
    if args.reveal_secret:
        payload["secret_seed_b64url"] = crypto.b64url_encode(kp.secret)
    _emit(args, payload, f"wrote {out}\npublic: {kp.public_multibase}")
    return 0


def cmd_id_new(args) -> int:
    kp = crypto.load_key_file(args.key)
    now = _now(args)
    entry = PublicKeyEntry(
        id=args.key_id,
        public_key_multibase=kp.public_multibase,
        valid_from=format_rfc3339(now),
        valid_until=format_rfc3339(now + args.key_ttl),
    )
    doc = IdentityDocument(
        id=str(parse_aip_id(args.id)),
        public_keys=(entry,),
        expires=format_rfc3339(now + args.ttl),
        protocols={"mcp": {"header": bindings.DEFAULT_TOKEN_HEADER},
                   "a2a": {"agent_card_field": bindings.AGENT_CARD_FIELD}},
    )
    if kp.secret is not None:
        doc = sign_document(doc, kp.secret)
    text = json.dumps(doc.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    _emit(args, doc.to_dict(), text)
    return 0


def cmd_id_sign(args) -> int:
    doc = IdentityDocument.from_dict(json.loads(Path(args.doc).read_text(encoding="utf-8")))
    doc = sign_document(doc, _load_secret(args.key))
    text = json.dumps(doc.to_dict(), indent=2)
    Path(args.out or args.doc).write_text(text + "\n", encoding="utf-8")
    _emit(args, doc.to_dict(), text)
    return 0


def cmd_id_verify(args) -> int:
    doc = IdentityDocument.from_dict(json.loads(Path(args.doc).read_text(encoding="utf-8")))
    ok = verify_document(doc)
    _emit(args, {"valid": ok, "id": doc.id}, f"{'valid' if ok else 'INVALID'}: {doc.id}")
    return 0 if ok else PROTOCOL_ERROR_EXIT


def cmd_id_resolve(args) -> int:
    resolver = _resolver(args)
    doc = resolver.resolve(parse_aip_id(args.id), _now(args))
    _emit(args, doc.to_dict(), json.dumps(doc.to_dict(), indent=2))
    return 0


def cmd_mint(args) -> int:
    now = _now(args)
    secret = _load_secret(args.key)
    if args.compact:
        claims = compact.CompactClaims(
            iss=args.iss, sub=args.sub, scope=tuple(args.scope.split(",")),
            budget_usd=args.budget_usd, max_depth=args.max_depth,
            iat=now, exp=now + args.ttl,
        )
        wire = compact.create_compact(claims, secret)
    else:
        checks = ()
        if args.simple_policy:
            tools = [chained.strip_tool_prefix(s) for s in args.scope.split(",")
                     if s.startswith("tool:") and not s.endswith(":*")]
            checks = tuple(policy.compile_simple_policy(
                tools or ["search"], args.budget_cents, args.max_depth,
                format_rfc3339(now + args.ttl),
            ))
        payload = chained.AuthorityPayload(
            identity=args.identity, scope=tuple(args.scope.split(",")),
            budget_cents=args.budget_cents, max_depth=args.max_depth,
            expires=format_rfc3339(now + args.ttl), checks=checks,
        )
        token = chained.mint_authority(payload, secret, _resolver(args), now)
        wire = chained.serialize(token)
    if args.out:
        Path(args.out).write_text(wire + "\n", encoding="utf-8")
    _emit(args, {"token": wire, "bytes": len(wire)}, wire)
    return 0


def cmd_attenuate(args) -> int:
    now = _now(args)
    token = chained.deserialize(_read_token_arg(args.token))
    payload = chained.DelegationPayload(
        delegator=args.delegator, delegatee=args.delegatee,
        scope=tuple(args.scope.split(",")), budget_cents=args.budget_cents,
        expires=format_rfc3339(now + args.ttl), context=args.context,
    )
    out = chained.attenuate(token, payload, _load_secret(args.key), _resolver(args), now)
    wire = chained.serialize(out)
    if args.out:
        Path(args.out).write_text(wire + "\n", encoding="utf-8")
    _emit(args, {"token": wire, "bytes": len(wire)}, wire)
    return 0


def cmd_complete(args) -> int:
    now = _now(args)
    token = chained.deserialize(_read_token_arg(args.token))
    if args.result_file:
        digest = crypto.sha256_hex(Path(args.result_file).read_bytes())
        result_hash = f"sha256:{digest}"
    else:
        result_hash = args.result_hash
    payload = chained.CompletionPayload(
        status=args.status, result_hash=result_hash,
        cost_usd=args.cost_usd, tokens_used=args.tokens_used,
    )
    out = chained.append_completion(
        token, payload, _load_secret(args.key), _resolver(args), now, seal=args.seal
    )
    wire = chained.serialize(out)
    if args.out:
        Path(args.out).write_text(wire + "\n", encoding="utf-8")
    _emit(args, {"token": wire, "bytes": len(wire)}, wire)
    return 0


def cmd_attest(args) -> int:
    now = _now(args)
    token = chained.deserialize(_read_token_arg(args.token))
    payload = chained.AttestationPayload(
        attester=args.attester, attested_block_index=args.index,
        verdict=args.verdict, note=args.note,
    )
    out = chained.append_attestation(token, payload, _load_secret(args.key), _resolver(args), now)
    wire = chained.serialize(out)
    if args.out:
        Path(args.out).write_text(wire + "\n", encoding="utf-8")
    _emit(args, {"token": wire, "bytes": len(wire)}, wire)
    return 0


def cmd_verify(args) -> int:
    now = _now(args)
    wire = _read_token_arg(args.token)
    resolver = _resolver(args)
    mode = bindings.detect_mode(wire)
    if mode is bindings.Mode.COMPACT:
        verified = compact.verify_compact(wire, resolver, now)
        if args.tool and not chained.scope_covers(verified.claims.scope, args.tool):
            from .errors import ScopeInsufficient

            raise ScopeInsufficient(
                f"{args.tool!r} not in granted scope {list(verified.claims.scope)}"
            )
        payload = {"mode": "compact", "accepted": True,
                   "iss": verified.claims.iss, "sub": verified.claims.sub,
                   "scope": list(verified.claims.scope)}
        _emit(args, payload, f"accepted compact token for {verified.claims.sub}")
    else:
        token = chained.deserialize(wire)
        facts = chained.RequestFacts(tool=args.tool, time=now)
        result = chained.verify_chain(token, resolver, facts, now, requested_scope=args.tool)
        payload = {"mode": "chained", "accepted": True, "root": result.root_id,
                   "depth": result.depth, "effective_scope": list(result.effective_scope),
                   "effective_budget_cents": result.effective_budget_cents}
        _emit(args, payload,
              f"accepted chained token: root {result.root_id}, depth {result.depth}, "
              f"scope {list(result.effective_scope)}")
    return 0


def cmd_inspect(args) -> int:
    wire = _read_token_arg(args.token)
    mode = bindings.detect_mode(wire)
    if mode is bindings.Mode.COMPACT:
        header_b64, claims_b64, _ = wire.split(".")
        claims = json.loads(crypto.b64url_decode(claims_b64))
        payload = {"mode": "compact", "claims": claims, "bytes": len(wire)}
        lines = [f"Compact token ({len(wire)} bytes)"]
        for k, v in claims.items():
            lines.append(f"  {k}: {v}")
        _emit(args, payload, "\n".join(lines))
        return 0
    token = chained.deserialize(wire)
    lines = [f"Chained token ({len(wire)} bytes, proof: {token.proof.kind})"]
    blocks_payload = []
    for block in token.blocks:
        p = block.payload.to_dict()
        blocks_payload.append({"index": block.index, "kind": block.kind, "payload": p})
        lines.append(f"Block {block.index} ({block.kind})")
        for k, v in p.items():
            lines.append(f"  {k}: {v}")
    payload = {"mode": "chained", "proof": token.proof.kind,
               "bytes": len(wire), "blocks": blocks_payload}
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_walkthrough(args) -> int:
    from .harness.walkthrough import run_walkthrough

    report = run_walkthrough()
    ok = all(step["ok"] for step in report["steps"])
    lines = []
    for step in report["steps"]:
        mark = "PASS" if step["ok"] else "FAIL"
        lines.append(f"step {step['n']} [{mark}] {step['name']}: {step['detail']}")
    lines.append(f"{sum(s['ok'] for s in report['steps'])}/5 steps passed")
    _emit(args, report, "\n".join(lines))
    return 0 if ok else PROTOCOL_ERROR_EXIT


def cmd_bench(args) -> int:
    from .harness.bench import run_http_overhead, run_microbench

    report = run_microbench(iterations=args.iterations, depths=range(args.max_depth + 1))
    if args.http:
        report.http = run_http_overhead(iterations=args.http_iterations)
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _emit(args, payload, report.to_table())
    return 0


def cmd_attack_suite(args) -> int:
    from .harness.attacks import run_attack_suite

    configs = set(args.config.split(",")) if args.config else {"aip", "unsigned", "plain_jwt"}
    report = run_attack_suite(iterations_per_attack=args.iterations, configs=configs, seed=args.seed)
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _emit(args, payload, report.to_table())
    return 0


def cmd_vectors(args) -> int:
    from .harness.vectors import check_conformance_vectors, emit_conformance_vectors

    if args.action == "emit":
        names = emit_conformance_vectors(args.dir)
        _emit(args, {"emitted": names}, f"emitted {len(names)} vectors to {args.dir}")
        return 0
    results = check_conformance_vectors(args.dir)
    failures = [r for r in results if not r["ok"]]
    lines = [
        f"[{'PASS' if r['ok'] else 'FAIL'}] {r['name']}: expected {r['expected']}, got {r['got']}"
        for r in results
    ]
    lines.append(f"{len(results) - len(failures)}/{len(results)} vectors passed")
    _emit(args, {"results": results}, "\n".join(lines))
    return 0 if not failures else PROTOCOL_ERROR_EXIT


def cmd_serve_demo(args) -> int:
    from .server import DemoToolServer

    resolver = _resolver(args)
    documents = {}
    if args.fixture_dir:
        root = Path(args.fixture_dir)
        for path in root.rglob("*.json"):
            host_rel = path.relative_to(root)
            parts = host_rel.parts
            url_path = "/" + "/".join(parts[1:])  # strip host directory
            documents[url_path] = path.read_bytes()
    server = DemoToolServer(
        resolver=resolver, port=args.port, require_auth=not args.no_auth,
        documents=documents, delay_ms=args.delay_ms,
    )
    server.start()
    print(f"demo server on {server.base_url} (auth={'off' if args.no_auth else 'on'})")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aip", description=__doc__)
    parser.add_argument("--output", choices=("text", "json"), default="text")
    parser.add_argument("--key-dir", help="directory for key files (env AIP_KEY_DIR)")
    parser.add_argument("--fixture-dir", help="resolve identities from local fixture files")
    parser.add_argument("--now", help="override clock (RFC 3339), for reproducible runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate an Ed25519 keypair file")
    p.add_argument("--out")
    p.add_argument("--seed-hex", help="32-byte hex seed for deterministic keys")
    p.add_argument("--reveal-secret", action="store_true")
    p.set_defaults(func=cmd_keygen)

    pid = sub.add_parser("id", help="identity document operations")
    idsub = pid.add_subparsers(dest="id_command", required=True)
    p = idsub.add_parser("new", help="build (and sign) an identity document")
    p.add_argument("--id", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--key-id", default="key-1")
    p.add_argument("--ttl", type=int, default=30 * 86400)
    p.add_argument("--key-ttl", type=int, default=90 * 86400)
    p.add_argument("--out")
    p.set_defaults(func=cmd_id_new)
    p = idsub.add_parser("sign", help="re-sign an identity document")
    p.add_argument("--doc", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_id_sign)
    p = idsub.add_parser("verify", help="check a document self-signature")
    p.add_argument("--doc", required=True)
    p.set_defaults(func=cmd_id_verify)
    p = idsub.add_parser("resolve", help="resolve an id to its document")
    p.add_argument("id")
    p.set_defaults(func=cmd_id_resolve)

    p = sub.add_parser("mint", help="mint a compact or chained token")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--compact", action="store_true")
    mode.add_argument("--chained", action="store_true")
    p.add_argument("--key", required=True)
    p.add_argument("--scope", required=True, help="comma-separated scope strings")
    p.add_argument("--ttl", type=int, default=1800)
    p.add_argument("--iss", help="compact: issuer id")
    p.add_argument("--sub", help="compact: subject id")
    p.add_argument("--budget-usd", default="5.00", help="compact: budget in USD")
    p.add_argument("--identity", help="chained: root identity")
    p.add_argument("--budget-cents", type=int, default=500, help="chained: budget ceiling")
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--simple-policy", action="store_true",
                   help="chained: attach the four canonical checks")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mint)

    p = sub.add_parser("attenuate", help="append a delegation block")
    p.add_argument("--token", required=True, help="wire, @file, or - for stdin")
    p.add_argument("--key", required=True, help="delegator identity key file")
    p.add_argument("--delegator", required=True)
    p.add_argument("--delegatee", required=True)
    p.add_argument("--scope", required=True)
    p.add_argument("--budget-cents", type=int, required=True)
    p.add_argument("--ttl", type=int, default=600)
    p.add_argument("--context", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attenuate)

    p = sub.add_parser("complete", help="append a completion block")
    p.add_argument("--token", required=True)
    p.add_argument("--key", required=True, help="executor identity key file")
    p.add_argument("--status", choices=chained.COMPLETION_STATUSES, default="completed")
    p.add_argument("--result-hash", default="sha256:" + "0" * 64)
    p.add_argument("--result-file", help="hash this file instead of --result-hash")
    p.add_argument("--cost-usd", default="0.00")
    p.add_argument("--tokens-used", type=int, default=0)
    p.add_argument("--seal", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("attest", help="append an attestation block")
    p.add_argument("--token", required=True)
    p.add_argument("--key", required=True, help="attester identity key file")
    p.add_argument("--attester", required=True)
    p.add_argument("--index", type=int, required=True, help="completion block index")
    p.add_argument("--verdict", choices=chained.ATTESTATION_VERDICTS, default="verified")
    p.add_argument("--note", default="")
    p.add_argument("--out")
    p.set_defaults(func=cmd_attest)

    p = sub.add_parser("verify", help="verify a token (both modes)")
    p.add_argument("--token", required=True)
    p.add_argument("--tool", help="requested scope, e.g. tool:search")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inspect", help="pretty-print a token")
    p.add_argument("--token", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("walkthrough", help="run the five-step delegation walkthrough")
    p.set_defaults(func=cmd_walkthrough)

    p = sub.add_parser("bench", help="microbenchmarks and HTTP overhead")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--http", action="store_true")
    p.add_argument("--http-iterations", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("attack-suite", help="adversarial evaluation matrix")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--config", help="comma-separated: aip,unsigned,plain_jwt")
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack_suite)

    p = sub.add_parser("vectors", help="conformance vectors")
    p.add_argument("action", choices=("emit", "check"))
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_vectors)

    p = sub.add_parser("serve-demo", help="run the demo tool server")
    p.add_argument("--port", type=int, default=8719)
    p.add_argument("--no-auth", action="store_true")
    p.add_argument("--delay-ms", type=float, default=0.0)
    p.set_defaults(func=cmd_serve_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as err:
        print(f"{err.code.value}: {err.detail}", file=sys.stderr)
        return PROTOCOL_ERROR_EXIT
    except AipError as err:
        print(f"{type(err).__name__}: {err.detail}", file=sys.stderr)
        return PROTOCOL_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
