"""CLI commands as thin wrappers over the library, plus the demo server."""

import http.client
import json
import time

import pytest

from aip import chained, crypto
from aip.cli import main
from aip.identity import format_rfc3339
from aip.server import DemoToolServer

from conftest import NOW, key_id, make_keypair


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def keyfile(tmp_path):
    path = tmp_path / "root.json"
    crypto.save_key_file(path, crypto.keygen(bytes(range(32))))
    return path


def _key_id_of(path) -> str:
    kp = crypto.load_key_file(path)
    return f"aip:key:ed25519:{kp.public_multibase}"


def test_keygen_writes_key_and_hides_secret(tmp_path, capsys):
    out = tmp_path / "k.json"
    code, stdout, _ = run_cli(capsys, "keygen", "--out", str(out))
    assert code == 0
    assert out.exists()
    data = json.loads(out.read_text())
    assert data["secret_seed_b64url"] not in stdout  # secret stays off stdout


def test_keygen_reveal_secret(tmp_path, capsys):
    out = tmp_path / "k.json"
    code, stdout, _ = run_cli(
        capsys, "--output", "json", "keygen", "--out", str(out),
        "--seed-hex", "00" * 32, "--reveal-secret",
    )
    assert code == 0
    payload = json.loads(stdout)
    assert payload["secret_seed_b64url"] == crypto.b64url_encode(bytes(32))


def test_mint_verify_inspect_chained(tmp_path, keyfile, capsys):
    identity = _key_id_of(keyfile)
    now_arg = format_rfc3339(NOW)
    code, wire, _ = run_cli(
        capsys, "--now", now_arg, "mint", "--chained",
        "--key", str(keyfile), "--identity", identity,
        "--scope", "tool:search,tool:email", "--budget-cents", "500",
        "--max-depth", "3", "--ttl", "1800",
    )
    assert code == 0
    wire = wire.strip()
    assert wire.startswith("AIP1.")

    code, out, _ = run_cli(capsys, "--now", now_arg, "verify",
                           "--token", wire, "--tool", "tool:search")
    assert code == 0 and "accepted" in out

    code, _, err = run_cli(capsys, "--now", now_arg, "verify",
                           "--token", wire, "--tool", "tool:video")
    assert code == 1
    assert "SCOPE_INSUFFICIENT" in err

    code, out, _ = run_cli(capsys, "--output", "json", "inspect", "--token", wire)
    assert code == 0
    parsed = json.loads(out)
    assert parsed["blocks"][0]["kind"] == "authority"


def test_cli_json_output_matches_library(tmp_path, keyfile, capsys, offline_resolver):
    identity = _key_id_of(keyfile)
    now_arg = format_rfc3339(NOW)
    code, out, _ = run_cli(
        capsys, "--output", "json", "--now", now_arg, "mint", "--chained",
        "--key", str(keyfile), "--identity", identity,
        "--scope", "tool:search", "--budget-cents", "100", "--max-depth", "2",
    )
    assert code == 0
    wire = json.loads(out)["token"]
    # the CLI result is exactly what the library verifies
    token = chained.deserialize(wire)
    result = chained.verify_chain(
        token, offline_resolver, chained.RequestFacts(tool="tool:search", time=NOW),
        NOW, requested_scope="tool:search",
    )
    assert result.root_id == identity


def test_full_lifecycle_via_cli(tmp_path, keyfile, capsys):
    root_id = _key_id_of(keyfile)
    orch_file = tmp_path / "orch.json"
    crypto.save_key_file(orch_file, crypto.keygen(bytes([7] * 32)))
    orch_id = _key_id_of(orch_file)
    eph_file = tmp_path / "eph.json"
    crypto.save_key_file(eph_file, crypto.keygen(bytes([9] * 32)))
    eph_id = _key_id_of(eph_file)
    now_arg = format_rfc3339(NOW)

    _, wire, _ = run_cli(
        capsys, "--now", now_arg, "mint", "--chained", "--key", str(keyfile),
        "--identity", root_id, "--scope", "tool:search,delegate:*",
        "--budget-cents", "500", "--max-depth", "3",
    )
    token_file = tmp_path / "t1.txt"
    token_file.write_text(wire.strip())

    code, wire2, _ = run_cli(
        capsys, "--now", now_arg, "attenuate", "--token", f"@{token_file}",
        "--key", str(keyfile), "--delegator", root_id, "--delegatee", orch_id,
        "--scope", "tool:search", "--budget-cents", "100",
        "--context", "research query: climate policy trends",
    )
    assert code == 0
    token_file.write_text(wire2.strip())

    code, wire3, _ = run_cli(
        capsys, "--now", now_arg, "attenuate", "--token", f"@{token_file}",
        "--key", str(orch_file), "--delegator", orch_id, "--delegatee", eph_id,
        "--scope", "tool:search", "--budget-cents", "10",
        "--context", "subtask",
    )
    assert code == 0
    token_file.write_text(wire3.strip())

    code, wire4, _ = run_cli(
        capsys, "--now", now_arg, "complete", "--token", f"@{token_file}",
        "--key", str(eph_file), "--status", "completed",
        "--cost-usd", "0.03", "--tokens-used", "1200", "--seal",
    )
    assert code == 0

    # the finished chain inspects as four blocks:
    # authority / delegation / delegation / completion
    code, out, _ = run_cli(capsys, "inspect", "--token", wire4.strip())
    assert code == 0
    assert out.count("Block") == 4
    kinds = [line.split("(")[1].rstrip(")") for line in out.splitlines()
             if line.startswith("Block ")]
    assert kinds == ["authority", "delegation", "delegation", "completion"]


def test_attenuate_violation_exits_nonzero(tmp_path, keyfile, capsys):
    root_id = _key_id_of(keyfile)
    now_arg = format_rfc3339(NOW)
    _, wire, _ = run_cli(
        capsys, "--now", now_arg, "mint", "--chained", "--key", str(keyfile),
        "--identity", root_id, "--scope", "tool:search",
        "--budget-cents", "100", "--max-depth", "3",
    )
    code, _, err = run_cli(
        capsys, "--now", now_arg, "attenuate", "--token", wire.strip(),
        "--key", str(keyfile), "--delegator", root_id, "--delegatee", root_id,
        "--scope", "tool:search", "--budget-cents", "600", "--context", "x",
    )
    assert code == 1
    assert "BudgetIncreased" in err


def test_mint_compact_and_verify(tmp_path, keyfile, capsys):
    iss = _key_id_of(keyfile)
    now_arg = format_rfc3339(NOW)
    code, wire, _ = run_cli(
        capsys, "--now", now_arg, "mint", "--compact", "--key", str(keyfile),
        "--iss", iss, "--sub", iss, "--scope", "tool:search",
        "--budget-usd", "5.00", "--ttl", "1800",
    )
    assert code == 0
    assert wire.strip().count(".") == 2
    code, out, _ = run_cli(capsys, "--now", now_arg, "verify",
                           "--token", wire.strip(), "--tool", "tool:search")
    assert code == 0


def test_id_new_sign_verify_resolve(tmp_path, keyfile, capsys):
    doc_file = tmp_path / "doc.json"
    code, out, _ = run_cli(
        capsys, "--now", format_rfc3339(NOW), "id", "new",
        "--id", "aip:web:acme.dev/agents/root", "--key", str(keyfile),
        "--out", str(doc_file),
    )
    assert code == 0 and doc_file.exists()
    code, out, _ = run_cli(capsys, "id", "verify", "--doc", str(doc_file))
    assert code == 0 and "valid" in out

    # fixture-dir resolution reads the document from the well-known layout
    fixture = tmp_path / "fixtures"
    target = fixture / "acme.dev" / ".well-known" / "aip" / "agents"
    target.mkdir(parents=True)
    (target / "root.json").write_text(doc_file.read_text())
    code, out, _ = run_cli(
        capsys, "--fixture-dir", str(fixture), "--now", format_rfc3339(NOW),
        "--output", "json", "id", "resolve", "aip:web:acme.dev/agents/root",
    )
    assert code == 0
    assert json.loads(out)["id"] == "aip:web:acme.dev/agents/root"


def test_id_resolve_key_form_offline(capsys, keyfile):
    kid = _key_id_of(keyfile)
    code, out, _ = run_cli(capsys, "--output", "json", "id", "resolve", kid)
    assert code == 0
    assert json.loads(out)["id"] == kid


def test_vectors_cli(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "vectors", "emit", "--dir", str(tmp_path / "v"))
    assert code == 0
    code, out, _ = run_cli(capsys, "vectors", "check", "--dir", str(tmp_path / "v"))
    assert code == 0
    assert "FAIL" not in out


def test_walkthrough_cli(capsys):
    code, out, _ = run_cli(capsys, "walkthrough")
    assert code == 0
    assert "5/5 steps passed" in out


def test_walkthrough_failure_injection():
    from aip.harness.walkthrough import run_walkthrough

    over_budget = run_walkthrough(delegation_budget_cents=600)
    step3 = over_budget["steps"][2]
    assert not step3["ok"] and "BudgetIncreased" in step3["detail"]

    no_context = run_walkthrough(delegation_context="")
    step3 = no_context["steps"][2]
    assert not step3["ok"] and "EmptyContext" in step3["detail"]


# ---------------------------------------------------------------------------
# demo server
# ---------------------------------------------------------------------------

def test_demo_server_auth_and_errors(rng, offline_resolver):
    root = make_keypair(rng)
    now = int(time.time())
    payload = chained.AuthorityPayload(
        identity=key_id(root), scope=("tool:search",), budget_cents=100,
        max_depth=2, expires=format_rfc3339(now + 600),
    )
    token = chained.mint_authority(payload, root.secret, offline_resolver, now)
    wire = chained.serialize(token)

    with DemoToolServer(resolver=offline_resolver, require_auth=True) as server:
        conn = http.client.HTTPConnection("127.0.0.1", server.port, timeout=10)

        def post(path, headers):
            conn.request("POST", path, body="{}",
                         headers={"Content-Type": "application/json", **headers})
            resp = conn.getresponse()
            return resp.status, json.loads(resp.read())

        status, body = post("/tools/search", {"X-AIP-Token": wire})
        assert status == 200 and body["verified_id"] == key_id(root)

        status, body = post("/tools/search", {})
        assert status == 401 and body["error"] == "TOKEN_MISSING"

        status, body = post("/tools/email", {"X-AIP-Token": wire})
        assert status == 403 and body["error"] == "SCOPE_INSUFFICIENT"

        status, body = post("/tools/search", {"X-AIP-Token": "garbage"})
        assert status == 401 and body["error"] == "TOKEN_MALFORMED"

        conn.request("GET", "/health")
        health = conn.getresponse()
        health.read()
        assert health.status == 200
        conn.close()


def test_demo_server_no_auth(offline_resolver):
    with DemoToolServer(resolver=offline_resolver, require_auth=False) as server:
        conn = http.client.HTTPConnection("127.0.0.1", server.port, timeout=10)
        conn.request("POST", "/tools/search", body=json.dumps({"query": "q"}),
                     headers={"Content-Type": "application/json"})
        resp = conn.getresponse()
        body = json.loads(resp.read())
        conn.close()
        assert resp.status == 200
        assert "verified_id" not in body
