"""Microbenchmarks and the loopback HTTP overhead experiment.

Latencies are wall-clock (monotonic perf counter), single-threaded, with
warmup iterations excluded. Absolute numbers are machine-specific; the
acceptance suite asserts bounds and shape (linearity), never equality with
any published figure. Raw samples ride along in the report so percentiles
can be recomputed.
"""

from __future__ import annotations

import http.client
import json
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .. import bindings, chained, compact, crypto
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
from ..server import DemoToolServer

BENCH_DOMAIN = "bench.dev"


@dataclass
class Stats:
    mean_ms: float
    p50_ms: float
    p99_ms: float
    n: int
    samples_ms: List[float] = field(default_factory=list)

    @classmethod
    def from_samples(cls, samples_ms: Sequence[float]) -> "Stats":
        ordered = sorted(samples_ms)
        return cls(
            mean_ms=statistics.fmean(ordered),
            p50_ms=_percentile(ordered, 0.50),
            p99_ms=_percentile(ordered, 0.99),
            n=len(ordered),
            samples_ms=list(samples_ms),
        )

    def to_dict(self, include_samples: bool = True) -> dict:
        data = {"mean_ms": self.mean_ms, "p50_ms": self.p50_ms,
                "p99_ms": self.p99_ms, "n": self.n}
        if include_samples:
            data["samples_ms"] = self.samples_ms
        return data


def _percentile(ordered: Sequence[float], q: float) -> float:
    if not ordered:
        return float("nan")
    if len(ordered) == 1:
        return ordered[0]
    pos = q * (len(ordered) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(ordered) - 1)
    frac = pos - lo
    return ordered[lo] * (1 - frac) + ordered[hi] * frac


@dataclass
class ChainedDepthResult:
    depth: int
    size_bytes: int
    verify: Stats

    def to_dict(self) -> dict:
        return {"depth": self.depth, "size_bytes": self.size_bytes,
                "verify": self.verify.to_dict()}


@dataclass
class BenchReport:
    compact_create: Stats
    compact_verify: Stats
    compact_token_bytes: int
    chained: List[ChainedDepthResult]
    http: Optional[dict] = None
    note: str = "single machine, loopback only; absolute latencies are hardware-specific"

    def to_dict(self) -> dict:
        data = {
            "note": self.note,
            "compact": {
                "create": self.compact_create.to_dict(),
                "verify": self.compact_verify.to_dict(),
                "token_bytes": self.compact_token_bytes,
            },
            "chained": [c.to_dict() for c in self.chained],
        }
        if self.http is not None:
            data["http"] = self.http
        return data

    def to_table(self) -> str:
        lines = [
            "compact mode",
            f"  create: mean {self.compact_create.mean_ms:.3f} ms  "
            f"p50 {self.compact_create.p50_ms:.3f}  p99 {self.compact_create.p99_ms:.3f}",
            f"  verify: mean {self.compact_verify.mean_ms:.3f} ms  "
            f"p50 {self.compact_verify.p50_ms:.3f}  p99 {self.compact_verify.p99_ms:.3f}",
            f"  token size: {self.compact_token_bytes} bytes",
            "chained mode (size bytes / verify ms)",
        ]
        for row in self.chained:
            lines.append(
                f"  depth {row.depth}: {row.size_bytes:5d} bytes   "
                f"verify mean {row.verify.mean_ms:.3f} ms  p99 {row.verify.p99_ms:.3f}"
            )
        if self.http:
            lines.append("http loopback (mean / p50 / p99 ms)")
            for cond in ("no_auth", "compact", "chained"):
                s = self.http[cond]
                lines.append(
                    f"  {cond:9s}: {s['mean_ms']:.3f} / {s['p50_ms']:.3f} / {s['p99_ms']:.3f}"
                )
            lines.append(
                f"  overhead: compact +{self.http['overhead_compact_ms']:.3f} ms, "
                f"chained +{self.http['overhead_chained_ms']:.3f} ms"
            )
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Fixture identities
# ---------------------------------------------------------------------------

def _web_identity(name: str, now: int, docs: Dict[str, bytes], rng: random.Random):
    kp = crypto.keygen(rng.randbytes(32))
    aid = AipId.web(BENCH_DOMAIN, name)
    entry = PublicKeyEntry(
        id="key-1",
        public_key_multibase=kp.public_multibase,
        valid_from=format_rfc3339(now - 3600),
        valid_until=format_rfc3339(now + 7 * 86400),
    )
    doc = sign_document(
        IdentityDocument(id=str(aid), public_keys=(entry,),
                         expires=format_rfc3339(now + 7 * 86400)),
        kp.secret,
    )
    docs[well_known_url(aid)] = json.dumps(doc.to_dict()).encode("utf-8")
    return kp, aid


def build_bench_fixture(max_depth: int = 5, now: Optional[int] = None, seed: int = 11):
    """Agents, resolver, a compact token, and chained tokens per depth."""
    now = int(time.time()) if now is None else now
    rng = random.Random(seed)
    docs: Dict[str, bytes] = {}
    agents = [_web_identity(f"agent-{i}", now, docs, rng) for i in range(max_depth + 2)]
    resolver = Resolver(ResolverConfig(fetcher=dict_fetcher(docs), cache_ttl=86400))

    issuer_kp, issuer_id = agents[0]
    subject_id = agents[1][1]
    claims = compact.CompactClaims(
        iss=str(issuer_id), sub=str(subject_id),
        scope=("tool:search", "tool:email"), budget_usd="5.00", max_depth=3,
        iat=now, exp=now + 1800, jti="bench-0001",
    )
    compact_wire = compact.create_compact(claims, issuer_kp.secret)

    from ..policy import compile_simple_policy

    authority = chained.AuthorityPayload(
        identity=str(issuer_id), scope=("tool:*",), budget_cents=500,
        max_depth=max_depth, expires=format_rfc3339(now + 3600),
        checks=tuple(compile_simple_policy(
            ["search"], 500, max_depth, format_rfc3339(now + 3600)
        )),
    )
    token = chained.mint_authority(authority, issuer_kp.secret, resolver, now)
    per_depth = [token]
    for d in range(1, max_depth + 1):
        payload = chained.DelegationPayload(
            delegator=str(agents[d - 1][1]), delegatee=str(agents[d][1]),
            scope=("tool:search",), budget_cents=50,
            expires=format_rfc3339(now + 3600), context=f"hop {d}",
        )
        token = chained.attenuate(token, payload, agents[d - 1][0].secret, resolver, now)
        per_depth.append(token)
    return {
        "now": now,
        "resolver": resolver,
        "claims": claims,
        "issuer_secret": agents[0][0].secret,
        "compact_wire": compact_wire,
        "chained_by_depth": per_depth,
        "documents": docs,
    }


# ---------------------------------------------------------------------------
# Microbenchmarks
# ---------------------------------------------------------------------------

def _time_ms(fn, iterations: int, warmup: int) -> Stats:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iterations):
        t0 = time.perf_counter_ns()
        fn()
        samples.append((time.perf_counter_ns() - t0) / 1e6)
    return Stats.from_samples(samples)


def run_microbench(
    iterations: int = 1000,
    depths: Sequence[int] = range(6),
    warmup: int = 50,
    chained_iterations: int = 100,
) -> BenchReport:
    """Compact create/verify latency plus chained size/verify per depth."""
    depths = list(depths)
    fixture = build_bench_fixture(max_depth=max(depths) if depths else 0)
    resolver, now = fixture["resolver"], fixture["now"]
    claims, secret = fixture["claims"], fixture["issuer_secret"]
    wire = fixture["compact_wire"]

    create_stats = _time_ms(lambda: compact.create_compact(claims, secret), iterations, warmup)
    verify_stats = _time_ms(lambda: compact.verify_compact(wire, resolver, now), iterations, warmup)

    chained_rows = []
    for depth in depths:
        token = fixture["chained_by_depth"][depth]
        token_wire = chained.serialize(token)
        parsed = chained.deserialize(token_wire)
        facts = chained.RequestFacts(tool="tool:search", time=now)

        def verify_once(t=parsed):
            chained.verify_chain(t, resolver, facts, now, requested_scope="tool:search")

        stats = _time_ms(verify_once, chained_iterations, min(warmup, 10))
        chained_rows.append(ChainedDepthResult(
            depth=depth, size_bytes=len(token_wire), verify=stats,
        ))

    return BenchReport(
        compact_create=create_stats,
        compact_verify=verify_stats,
        compact_token_bytes=len(wire),
        chained=chained_rows,
    )


# ---------------------------------------------------------------------------
# HTTP overhead
# ---------------------------------------------------------------------------

def _measure_http(port: int, iterations: int, warmup: int, headers: dict) -> Stats:
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=10)
    body = json.dumps({"query": "bench"})
    send_headers = {"Content-Type": "application/json", **headers}

    def once():
        conn.request("POST", "/tools/search", body=body, headers=send_headers)
        resp = conn.getresponse()
        data = resp.read()
        if resp.status != 200:
            raise RuntimeError(f"unexpected status {resp.status}: {data[:200]!r}")

    try:
        stats = _time_ms(once, iterations, warmup)
    finally:
        conn.close()
    return stats


def run_http_overhead(iterations: int = 100, warmup: int = 20, delay_ms: float = 0.0) -> dict:
    """Three loopback conditions: no auth, compact token, chained token.

    ``delay_ms`` adds an artificial service time to every condition, standing
    in for real tool work when demonstrating overhead ratios.
    """
    fixture = build_bench_fixture(max_depth=1)
    resolver = fixture["resolver"]
    compact_wire = fixture["compact_wire"]
    chained_wire = chained.serialize(fixture["chained_by_depth"][1])

    with DemoToolServer(resolver=resolver, require_auth=False, delay_ms=delay_ms) as open_server:
        no_auth = _measure_http(open_server.port, iterations, warmup, {})

    with DemoToolServer(resolver=resolver, require_auth=True, delay_ms=delay_ms) as auth_server:
        with_compact = _measure_http(
            auth_server.port, iterations, warmup,
            {bindings.DEFAULT_TOKEN_HEADER: compact_wire},
        )
        with_chained = _measure_http(
            auth_server.port, iterations, warmup,
            {bindings.DEFAULT_TOKEN_HEADER: chained_wire},
        )

    return {
        "iterations": iterations,
        "delay_ms": delay_ms,
        "no_auth": no_auth.to_dict(),
        "compact": with_compact.to_dict(),
        "chained": with_chained.to_dict(),
        "overhead_compact_ms": with_compact.mean_ms - no_auth.mean_ms,
        "overhead_chained_ms": with_chained.mean_ms - no_auth.mean_ms,
    }
