"""Harness behavior: attack-suite determinism and proportions at small
iteration counts, bench report shape, vector closure. The full paper-scale
runs live in test_acceptance.py."""

import pytest

from aip.harness.attacks import CATEGORIES, run_attack_suite
from aip.harness.bench import Stats, build_bench_fixture, run_microbench
from aip.harness.vectors import (
    build_vectors,
    check_conformance_vectors,
    emit_conformance_vectors,
)


def test_attack_suite_proportions_small():
    report = run_attack_suite(iterations_per_attack=5, seed=123)
    assert report.totals("aip") == {"attempts": 30, "rejected": 30}
    assert report.totals("unsigned") == {"attempts": 30, "rejected": 0}
    assert report.totals("plain_jwt") == {"attempts": 30, "rejected": 20}
    jwt_cells = report.cells["plain_jwt"]
    assert jwt_cells["depth_violation"]["rejected"] == 0
    assert jwt_cells["empty_context"]["rejected"] == 0
    for caught in ("scope_widening", "expired_replay", "wrong_key", "forgery"):
        assert jwt_cells[caught]["rejected"] == 5


def test_attack_suite_deterministic():
    a = run_attack_suite(iterations_per_attack=4, seed=99, now=1780272000)
    b = run_attack_suite(iterations_per_attack=4, seed=99, now=1780272000)
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize("iterations,seed", [(10, 1), (250, 314159)])
def test_aip_rejection_holds_for_any_count_and_seed(iterations, seed):
    report = run_attack_suite(iterations_per_attack=iterations, seed=seed,
                              configs={"aip"})
    totals = report.totals("aip")
    assert totals["rejected"] == totals["attempts"] == iterations * len(CATEGORIES)


def test_attack_suite_rejects_bad_iterations():
    with pytest.raises(ValueError):
        run_attack_suite(iterations_per_attack=0)


def test_attack_table_shape():
    report = run_attack_suite(iterations_per_attack=2, seed=5)
    table = report.to_table()
    for cat in CATEGORIES:
        assert cat in table
    assert "total" in table


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def test_stats_percentiles():
    stats = Stats.from_samples([1.0, 2.0, 3.0, 4.0])
    assert stats.mean_ms == 2.5
    assert stats.p50_ms == 2.5
    assert stats.n == 4
    assert stats.samples_ms == [1.0, 2.0, 3.0, 4.0]


def test_bench_fixture_sizes_strictly_increase():
    fixture = build_bench_fixture(max_depth=5)
    from aip import chained

    sizes = [len(chained.serialize(t)) for t in fixture["chained_by_depth"]]
    assert all(b > a for a, b in zip(sizes, sizes[1:]))
    assert len(fixture["compact_wire"]) <= 512


def test_microbench_report_shape():
    report = run_microbench(iterations=20, depths=range(3),
                            warmup=2, chained_iterations=5)
    data = report.to_dict()
    assert data["compact"]["create"]["n"] == 20
    assert len(data["compact"]["verify"]["samples_ms"]) == 20  # raw persisted
    assert [row["depth"] for row in data["chained"]] == [0, 1, 2]
    assert "token_bytes" in data["compact"]
    table = report.to_table()
    assert "compact mode" in table and "depth 2" in table


# ---------------------------------------------------------------------------
# vectors
# ---------------------------------------------------------------------------

def test_vectors_closure(tmp_path):
    names = emit_conformance_vectors(tmp_path)
    assert len(names) >= 20
    results = check_conformance_vectors(tmp_path)
    assert len(results) == len(names)
    failures = [r for r in results if not r["ok"]]
    assert failures == []


def test_vectors_cover_all_nine_codes():
    codes = set()
    for vec in build_vectors():
        expected = vec["expected"]
        for item in (expected if isinstance(expected, list) else [expected]):
            if item != "accept":
                codes.add(item)
    assert codes == {
        "TOKEN_MISSING", "TOKEN_MALFORMED", "TOKEN_EXPIRED", "SIGNATURE_INVALID",
        "IDENTITY_UNRESOLVABLE", "KEY_REVOKED", "SCOPE_INSUFFICIENT",
        "BUDGET_EXCEEDED", "DEPTH_EXCEEDED",
    }


def test_vectors_include_required_shapes():
    names = {v["name"] for v in build_vectors()}
    for required in ("compact_valid", "chained_valid_depth0", "chained_valid_depth3",
                     "chained_sealed", "chained_wildcard",
                     "chained_upgraded_from_compact"):
        assert required in names


def test_vector_emission_outcome_deterministic(tmp_path):
    # fresh holder keys make the wires differ run to run, but the corpus
    # shape and every verdict are fixed
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    names_a = emit_conformance_vectors(dir_a)
    names_b = emit_conformance_vectors(dir_b)
    assert names_a == names_b
    import json

    for name in names_a:
        vec_a = json.loads((dir_a / name).read_text())
        vec_b = json.loads((dir_b / name).read_text())
        assert vec_a["expected"] == vec_b["expected"]
        assert vec_a["tool"] == vec_b["tool"]
        assert vec_a["now"] == vec_b["now"]
    assert all(r["ok"] for r in check_conformance_vectors(dir_b))


def test_vector_mismatch_detected(tmp_path):
    emit_conformance_vectors(tmp_path)
    victim = sorted(tmp_path.glob("*compact_valid*"))[0]
    import json

    data = json.loads(victim.read_text())
    data["expected"] = "TOKEN_EXPIRED"  # sabotage
    victim.write_text(json.dumps(data))
    results = check_conformance_vectors(tmp_path)
    assert any(not r["ok"] for r in results)
