"""Acceptance suite: one test per release criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

import gzip
import json
import random
import struct
import time

import pytest
from fastapi.testclient import TestClient

from neuroagent.config import GatewayConfig
from neuroagent.coordinator import (
    AVERAGE,
    LLM_COORDINATED,
    VOTE,
    coordinate_average,
    coordinate_llm,
    coordinate_vote,
)
from neuroagent.domain import Modality, StrategyKind, TaskKind
from neuroagent.evaluation import (
    AblationConfig,
    SynthModelProfile,
    compute_metrics,
    run_repeated,
)
from neuroagent.gateway import GatewayService, create_app
from neuroagent.llm import RuleBackend, ScriptedBackend
from neuroagent.nifti import (
    BadDimsError,
    BadMagicError,
    BadSizeofHdrError,
    Endianness,
    NiftiHeader,
    TooShortError,
    build_header,
    parse_header,
)
from neuroagent.registry import NoApplicableToolError

from helpers import build_nifti, four_tool_manifests, four_tool_registry, ok_outcome
from test_coordinator import oracle_average_label, oracle_vote_label, random_outcome_set
from test_evaluation import oracle_metrics


def report(name: str, detail: str = "") -> None:
    print(f"ACCEPTANCE PASS  {name}" + (f"  [{detail}]" if detail else ""))


def test_routing_table_matches_tool_selection_rules():
    """Six (task, modality-set) pairs resolve exactly as specified, < 1 s."""
    start = time.monotonic()
    registry = four_tool_registry()
    expectations = [
        (TaskKind.DIAGNOSIS, {Modality.MRI, Modality.PET}, "mm-diag"),
        (TaskKind.PROGNOSIS, {Modality.MRI, Modality.PET}, "mm-prog"),
        (TaskKind.DIAGNOSIS, {Modality.MRI}, "mri-diag"),
        (TaskKind.DIAGNOSIS, {Modality.PET}, "pet-diag"),
        (TaskKind.PROGNOSIS, {Modality.MRI}, None),
        (TaskKind.PROGNOSIS, {Modality.PET}, None),
    ]
    hits = 0
    for task, available, expected in expectations:
        if expected is None:
            with pytest.raises(NoApplicableToolError):
                registry.resolve_tools(task, frozenset(available))
        else:
            assert registry.resolve_tools(task, frozenset(available))[0] == expected
        hits += 1
    elapsed = time.monotonic() - start
    assert hits == 6
    assert elapsed < 1.0
    report("routing table 6/6", f"{elapsed:.3f}s")


def test_coordinator_oracle_equivalence_1000_sets():
    """Average and Vote match brute-force recomputation on 1000 random sets, < 5 s."""
    start = time.monotonic()
    rng = random.Random(20240601)
    mismatches = 0
    for i in range(1000):
        n_classes = 2 if i % 2 == 0 else 3
        outcomes = random_outcome_set(rng, rng.randint(3, 7), n_classes)
        vectors = [o.distribution.probs for o in outcomes]
        if coordinate_average(outcomes).label_index != oracle_average_label(vectors):
            mismatches += 1
        if coordinate_vote(outcomes).label_index != oracle_vote_label(vectors):
            mismatches += 1
    elapsed = time.monotonic() - start
    assert mismatches == 0
    assert elapsed < 5.0
    report("coordinator oracle equivalence 1000 sets, 0 mismatches", f"{elapsed:.2f}s")


def test_metrics_oracle_500_instances_and_hand_example():
    """Metrics equal the confusion-matrix oracle within 1e-12; the worked example holds."""
    rng = random.Random(777)
    for _ in range(500):
        n = rng.choice([2, 3])
        length = rng.randint(1, 200)
        labels = [rng.randrange(n) for _ in range(length)]
        preds = [rng.randrange(n) for _ in range(length)]
        m = compute_metrics(preds, labels, n)
        acc, spe, sen, f1 = oracle_metrics(preds, labels, n)
        assert abs(m.acc - acc) <= 1e-12
        assert abs(m.spe - spe) <= 1e-12
        assert abs(m.sen - sen) <= 1e-12
        assert abs(m.f1 - f1) <= 1e-12

    hand = compute_metrics(preds=[0, 1, 1, 1], labels=[0, 1, 2, 1], n_classes=3)
    assert hand.acc == pytest.approx(0.75, abs=1e-12)
    assert hand.sen == pytest.approx(0.6667, abs=5e-5)
    assert hand.spe == pytest.approx(0.8333, abs=5e-5)
    assert hand.f1 == pytest.approx(0.6, abs=1e-12)
    report("metrics oracle 500 instances + hand-worked example")


def test_desk_scale_ablation_reproduction():
    """Five ~0.6-accurate models, 5000 subjects, 3 runs per seed group:
    Average beats the best single model in >= 9/10 groups; the echo-vote
    coordinator row equals the Vote row exactly; m±s table renders; < 60 s."""
    start = time.monotonic()
    rows = tuple(tuple(0.6 if i == j else 0.2 for i in range(3)) for j in range(3))
    profiles = tuple(SynthModelProfile(f"m{i + 1}", rows, sharpness=0.7) for i in range(5))
    config = AblationConfig(
        profiles=profiles,
        class_priors=(1 / 3, 1 / 3, 1 / 3),
        n_subjects=5000,
        strategies=(AVERAGE, VOTE, LLM_COORDINATED),
    )

    wins = 0
    table = None
    for group in range(10):
        result = run_repeated(
            config, n_runs=3, base_seed=1000 * group, llm=RuleBackend("echo-vote")
        )
        avg_acc = result.cells["average"]["acc"][0]
        best_single = max(
            result.cells[f"model:m{i + 1}"]["acc"][0] for i in range(5)
        )
        if avg_acc > best_single:
            wins += 1
        assert result.cells["llm_coordinated"] == result.cells["vote"]
        table = result

    text = table.format_text()
    sample_cell = table.cell_text("average", "acc")
    assert "±" in sample_cell and len(sample_cell.split("±")[0].split(".")[1]) == 3
    assert "average" in text and "vote" in text and "llm_coordinated" in text

    elapsed = time.monotonic() - start
    assert wins >= 9
    assert elapsed < 60.0
    report(
        "desk-scale ablation",
        f"average beat best single in {wins}/10 seed groups, {elapsed:.1f}s",
    )


# one reply for the intent classification, one for the coordination step
SCRIPTED_EPISODE_LLM = {
    "kind": "scripted",
    "transcript": ["INTENT: diagnosis", "FINAL: MCI\nREASON: four of five models favour MCI"],
}

MM_DIAG_ENDPOINTS = [
    "mock:fixed:0.1,0.7,0.2",
    "mock:fixed:0.2,0.5,0.3",
    "mock:fixed:0.6,0.2,0.2",
    "mock:fixed:0.1,0.6,0.3",
    "mock:fixed:0.25,0.35,0.4",
]


def _episode_payloads(tmp_path, run_tag: str) -> tuple[list[dict], dict]:
    config = GatewayConfig(
        manifests=four_tool_manifests({"mm-diag": MM_DIAG_ENDPOINTS}),
        llm=dict(SCRIPTED_EPISODE_LLM),
    )
    service = GatewayService(config, data_dir=tmp_path / f"data-{run_tag}")
    client = TestClient(create_app(service))
    sid = client.post("/sessions", json={}).json()["session_id"]
    for modality in ("mri", "pet"):
        resp = client.post(
            f"/sessions/{sid}/scans?modality={modality}", content=build_nifti()
        )
        assert resp.status_code == 200, resp.text
    body = client.post(
        f"/sessions/{sid}/query", json={"text": "What stage is this patient in?"}
    ).json()
    resp = client.get(f"/sessions/{sid}/trace?from_seq=0&follow=false")
    events = [
        json.loads(line[len("data: "):])
        for line in resp.text.splitlines()
        if line.startswith("data: ")
    ]
    payloads = [{k: v for k, v in e.items() if k != "timestamp"} for e in events]
    return payloads, body


def test_end_to_end_deterministic_episode(tmp_path):
    """Scripted LLM + mock backends: 4-stage trace, decision in CN/MCI/AD,
    byte-stable payloads (timestamps excluded) across two runs."""
    first_payloads, first_body = _episode_payloads(tmp_path, "run1")
    second_payloads, second_body = _episode_payloads(tmp_path, "run2")

    assert [e["stage"] for e in first_payloads] == [
        "observation", "thought", "action", "coordination",
    ]
    assert first_body["decision"]["label_name"] in ("CN", "MCI", "AD")
    assert first_body["decision"]["task"] == "diagnosis"

    one = json.dumps(first_payloads, sort_keys=True)
    two = json.dumps(second_payloads, sort_keys=True)
    assert one == two
    report("end-to-end deterministic episode", f"decision={first_body['decision']['label_name']}")


def test_llm_robustness_retries_and_case_insensitive_parse():
    """3 malformed replies -> exactly 2 retries then Average fallback; 'final: ad' -> AD."""
    outcomes = [
        ok_outcome("m1", (0.1, 0.7, 0.2)),
        ok_outcome("m2", (0.2, 0.5, 0.3)),
        ok_outcome("m3", (0.6, 0.2, 0.2)),
    ]
    malformed = ScriptedBackend(["hmm", "not sure", "could be anything"])
    decision = coordinate_llm(outcomes, malformed)
    assert malformed.consumed == 3  # 1 initial attempt + exactly 2 retries
    assert decision.strategy is StrategyKind.AVERAGE
    assert "fell back" in decision.rationale

    lower = coordinate_llm(outcomes, ScriptedBackend(["final: ad"]))
    assert lower.label_name == "AD"
    assert lower.strategy is StrategyKind.LLM_COORDINATED
    report("llm robustness", "2 retries then average fallback; lowercase parse ok")


def test_nifti_suite():
    """Round-trip both endiannesses; the three parse examples; 10k random buffers."""
    for endianness in (Endianness.LITTLE, Endianness.BIG):
        header = NiftiHeader(
            sizeof_hdr=348,
            dim=(3, 64, 64, 64, 1, 1, 1, 1),
            datatype_code=4,
            bitpix=16,
            magic=b"n+1\x00",
            endianness=endianness,
        )
        assert parse_header(build_header(header)) == header

    # example 1: little-endian volumetric header
    parsed = parse_header(build_nifti())
    assert parsed.endianness is Endianness.LITTLE and parsed.dim[0] == 3
    # example 2: bad magic
    with pytest.raises(BadMagicError):
        parse_header(build_nifti(magic=b"xyz\x00"))
    # example 3: byte-swapped sizeof_hdr detected as the opposite endianness
    swapped = build_nifti(byte_order=">")
    assert struct.unpack("<i", swapped[:4])[0] == 1543569408
    assert parse_header(swapped).endianness is Endianness.BIG

    rng = random.Random(123456)
    for _ in range(10_000):
        buf = rng.randbytes(348)
        try:
            header = parse_header(buf)
        except (TooShortError, BadMagicError, BadSizeofHdrError, BadDimsError):
            continue
        assert header.sizeof_hdr == 348
        assert header.magic in (b"n+1\x00", b"ni1\x00")
        assert 1 <= header.dim[0] <= 7
        assert all(header.dim[i] >= 1 for i in range(1, header.dim[0] + 1))
    report("nifti suite", "round-trip, 3 examples, 10k fuzz buffers")


def test_crash_restart_replays_identical_trace(tmp_path):
    """Restarting the gateway mid-session replays the identical persisted sequence."""
    config = GatewayConfig(
        manifests=four_tool_manifests({"mm-diag": MM_DIAG_ENDPOINTS}),
        llm={"kind": "rule", "tag": "echo-vote"},
    )
    data_dir = tmp_path / "data"

    service1 = GatewayService(config, data_dir=data_dir)
    client1 = TestClient(create_app(service1))
    sid = client1.post("/sessions", json={}).json()["session_id"]
    for modality in ("mri", "pet"):
        client1.post(f"/sessions/{sid}/scans?modality={modality}", content=build_nifti())
    client1.post(f"/sessions/{sid}/query", json={"text": "What stage is this patient in?"})
    before = client1.get(f"/sessions/{sid}/trace?from_seq=0&follow=false").text
    del client1, service1  # the only handles on the first gateway

    service2 = GatewayService(config, data_dir=data_dir)
    client2 = TestClient(create_app(service2))
    after = client2.get(f"/sessions/{sid}/trace?from_seq=0&follow=false").text
    assert after == before
    assert "coordination" in after
    report("crash-restart replay identical")
