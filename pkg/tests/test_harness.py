import json
import math
import random

import pytest

from binverify.errors import BackendError, InvalidInputError, ManifestError
from binverify.harness import (
    ItemRecord,
    RunConfig,
    RunReport,
    aggregate,
    load_manifest,
    plurality,
    run,
    t_interval,
)
from binverify.tasks import TaskInstance
from binverify.tasks.maze import bfs_path, generate_maze
from binverify.verifiers import ScriptedVerifier, SimulatedVerifier, SimulatorParams


def write_lines(path, objs):
    path.write_text("".join((o if isinstance(o, str) else json.dumps(o)) + "\n" for o in objs))
    return path


def rec_line(i, **extra):
    obj = {"kind": "rec", "id": f"r{i}", "expression": "the cup", "gt_box": [0, 0, 10, 10],
           "detections": [{"box": [0, 0, 10, 10], "score": 0.9}]}
    obj.update(extra)
    return obj


def synthetic(n, options=("A", "B"), prefix="s"):
    return [TaskInstance("synthetic", f"{prefix}{i}", source={"options": list(options)},
                         ground_truth=options[i % len(options)]) for i in range(n)]


# --------------------------------------------------------------------------
# manifests


def test_manifest_three_rec_lines(tmp_path):
    items = load_manifest(write_lines(tmp_path / "m.jsonl", [rec_line(i) for i in range(3)]))
    assert [i.id for i in items] == ["r0", "r1", "r2"]
    assert items[0].source["detections"][0].box == (0, 0, 10, 10)


def test_manifest_missing_ground_truth(tmp_path):
    bad = rec_line(1)
    del bad["gt_box"]
    path = write_lines(tmp_path / "m.jsonl", [rec_line(0), bad, rec_line(2)])
    with pytest.raises(ManifestError) as info:
        load_manifest(path)
    assert info.value.line == 2 and "gt_box" in str(info.value) and str(info.value).startswith("line 2:")


def test_manifest_skip_bad_lines(tmp_path):
    path = write_lines(tmp_path / "m.jsonl", [rec_line(0), "{not json", rec_line(2, gt_box=[5, 5, 5, 9])])
    errors = []
    items = load_manifest(path, fail_fast=False, errors=errors)
    assert [i.id for i in items] == ["r0"] and [e.line for e in errors] == [2, 3]


def test_manifest_single_kind(tmp_path):
    path = write_lines(tmp_path / "m.jsonl", [
        rec_line(0), {"kind": "spatial-map", "id": "m", "a": "A", "b": "B", "answer": "NW"}])
    with pytest.raises(ManifestError) as info:
        load_manifest(path)
    assert info.value.line == 2


def test_manifest_side_files(tmp_path):
    (tmp_path / "dets.json").write_text(json.dumps([{"box": [1, 1, 4, 4], "score": 0.5}]))
    maze = generate_maze(7, 7, 1)
    (tmp_path / "maze.txt").write_text(maze.dump())
    line = rec_line(0)
    del line["detections"]
    line["detections_file"] = "dets.json"
    items = load_manifest(write_lines(tmp_path / "a.jsonl", [line]))
    assert items[0].source["detections"][0].box == (1, 1, 4, 4)
    items = load_manifest(write_lines(tmp_path / "b.jsonl", [{"kind": "spatial-maze", "id": "z",
                                                              "maze_file": "maze.txt"}]))
    assert items[0].source["maze"] == maze


@pytest.mark.parametrize("obj", [
    {"kind": "nope", "id": "x"},
    {"kind": "spatial-map", "id": "x", "a": "A", "b": "B", "answer": "N"},
    {"kind": "spatial-grid", "id": "x", "categories": ["cat"], "answer": "dog", "cell": [1, 1]},
    {"kind": "spatial-grid", "id": "x", "categories": ["cat"], "answer": "cat", "cell": [6, 1]},
    {"kind": "jigsaw", "id": "x", "tiles": ["a.png"], "answer": "A"},
    {"kind": "synthetic", "id": "x", "options": ["A"], "answer": "B"},
])
def test_manifest_schema_errors(tmp_path, obj):
    with pytest.raises(ManifestError):
        load_manifest(write_lines(tmp_path / "m.jsonl", [obj]))


# --------------------------------------------------------------------------
# config and voting


def test_run_config_modes():
    assert RunConfig(mode="mcq-mv(5)").votes == 5
    with pytest.raises(InvalidInputError):
        RunConfig(mode="mcq-mv(4)")
    with pytest.raises(InvalidInputError):
        RunConfig(mode="mcq-mv", votes=1)
    with pytest.raises(InvalidInputError):
        RunConfig(mode="vote")
    with pytest.raises(InvalidInputError):
        RunConfig(repeats=0)


def test_plurality_ties_go_low():
    assert plurality([2, 1, 0], 3) == (0, True)
    assert plurality([2, 2, 1], 3) == (2, False)
    assert plurality([1, 2, 2, 1, 0], 3) == (1, True)


def test_majority_vote_uses_vote_temperature():
    temps = []

    def mcq(q):
        temps.append((q.temperature, q.key))
        return {"#v0": 1, "#v1": 0, "#v2": 1}[q.key[-3:]]

    report = run(RunConfig(mode="mcq-mv", votes=3), synthetic(1), ScriptedVerifier(mcq=mcq))
    rec = report.records[0]
    assert {t for t, _ in temps} == {1.0} and len({k for _, k in temps}) == 3
    assert rec.votes == ["B", "A", "B"] and rec.chosen == "B" and not rec.correct and rec.mcq_queries == 3


# --------------------------------------------------------------------------
# running and aggregation


def test_query_budget_from_logs(tmp_path):
    items = synthetic(300, options=("A", "B", "C", "D"))
    report = run(RunConfig(render=False), items, SimulatedVerifier(SimulatorParams(0.7, 0.3, 0.6, seed=2)),
                 log_path=tmp_path / "log.jsonl")
    events = [json.loads(line) for line in (tmp_path / "log.jsonl").read_text().splitlines()]
    for inst in items:
        mine = [e for e in events if e["item"] == inst.id]
        assert sum(e["kind"] == "claim" for e in mine) == 4
        assert sum(e["kind"] == "mcq" for e in mine) <= 1
    rec = report.records[0]
    assert rec.claim_queries == 4 and rec.mcq_queries == (0 if rec.branch == "single-true" else 1)


def test_reproducible_bytes_and_parallel(tmp_path):
    items = synthetic(200, options=("A", "B", "C"))
    sim = SimulatedVerifier(SimulatorParams(0.8, 0.2, 0.6, seed=7))
    cfg = dict(render=False, repeats=2, seed=7)
    a = run(RunConfig(**cfg), items, sim)
    b = run(RunConfig(**cfg), items, SimulatedVerifier(SimulatorParams(0.8, 0.2, 0.6, seed=7)))
    c = run(RunConfig(parallelism=4, **cfg), items, sim)
    assert a.to_json() == b.to_json()
    a.config.pop("parallelism", None), c.config.pop("parallelism", None)
    assert a.to_json() == c.to_json()


def test_conservation_and_errors():
    items = synthetic(20)

    def claim(q):
        if q.key.startswith("s3/"):
            raise BackendError("boom")
        return q.key.split("/")[1].startswith("A")

    records = run(RunConfig(), items, ScriptedVerifier(claim, lambda q: 0)).records
    records.append(ItemRecord("none", status="no-candidate"))
    agg = aggregate(records)
    assert agg["errored"] == 1 and agg["no_candidate"] == 1
    assert agg["counted"] == agg["correct"] + agg["incorrect"] + agg["errored"] + agg["no_candidate"]
    assert agg["scored"] == 20
    errored = next(r for r in records if r.item_id == "s3")
    assert errored.status == "errored" and "boom" in errored.error
    freq = sum(b["frequency"] for b in agg["branches"].values()) + agg["no_candidate_fraction"]
    assert freq == pytest.approx(1.0)
    weighted = sum(b["frequency"] * b["accuracy"] for b in agg["branches"].values())
    assert weighted == pytest.approx(agg["accuracy"])


def test_all_correct_ci():
    agg = aggregate([ItemRecord(f"i{k}", correct=True) for k in range(10)])
    assert agg["accuracy"] == 1.0 and (agg["ci"]["low"], agg["ci"]["high"]) == (1.0, 1.0)


def test_ci_matches_t_formula():
    rng = random.Random(0)
    skill = [rng.random() for _ in range(150)]
    records = [ItemRecord(f"i{i}", repeat=r, correct=rng.random() < skill[i]) for i in range(150) for r in range(8)]
    agg = aggregate(records)
    means = [sum(records[i * 8 + r].correct for r in range(8)) / 8 for i in range(150)]
    mean = sum(means) / 150
    sd = math.sqrt(sum((m - mean) ** 2 for m in means) / 149)
    half = 1.9760131 * sd / math.sqrt(150)  # t quantile 0.975 at 149 degrees of freedom
    assert agg["ci"]["low"] == pytest.approx(mean - half, abs=1e-6)
    assert agg["ci"]["high"] == pytest.approx(mean + half, abs=1e-6)
    assert agg["ci"]["items"] == 150 and "Student-t" in agg["ci"]["method"]
    assert t_interval([0.5]) == (0.5, 0.5)


def test_paired_accuracy():
    items = synthetic(400)
    sim = SimulatedVerifier(SimulatorParams(0.8, 0.2, 0.6, seed=1))
    mcq = run(RunConfig(mode="mcq", render=False), items, sim)
    binary = run(RunConfig(render=False), items, sim, paired=mcq.records)
    by_id = {r.item_id: r for r in mcq.records}
    for name, entry in binary.aggregates["branches"].items():
        ids = [r.item_id for r in binary.records if r.branch == name]
        assert entry["paired_count"] == len(ids)
        assert entry["paired_accuracy"] == pytest.approx(sum(by_id[i].correct for i in ids) / len(ids))


def test_report_round_trip(tmp_path):
    report = run(RunConfig(render=False), synthetic(30), SimulatedVerifier(SimulatorParams(0.9, 0.1, 0.8)))
    report.save(tmp_path / "r.json")
    again = RunReport.load(tmp_path / "r.json")
    assert again.to_json() == report.to_json()
    assert "latency" not in json.loads(report.to_json())["records"][0]
    assert "latency" in report.to_dict(include_timing=True)["records"][0]
    assert report.breakdown_csv().splitlines()[0].startswith("branch,count,frequency")
    assert "accuracy" in report.summary()


def test_mixed_kinds_rejected():
    items = synthetic(1) + [TaskInstance("spatial-map", "m", source={"a": "A", "b": "B"}, ground_truth="NW")]
    with pytest.raises(InvalidInputError):
        run(RunConfig(), items, ScriptedVerifier())


def test_open_mode_spatial_map():
    items = [TaskInstance("spatial-map", "m", source={"a": "A", "b": "B"}, ground_truth="NW")]
    report = run(RunConfig(mode="open"), items, ScriptedVerifier(completions={"m/open": "Northwest."}))
    assert report.accuracy == 1.0 and report.records[0].other_queries == 1


def test_maze_modes():
    maze = generate_maze(7, 9, 3)
    path = bfs_path(maze)
    inst = TaskInstance("spatial-maze", "z", source={"maze": maze}, ground_truth="valid-path")
    good = json.dumps({"path": [list(c) for c in path], "checks": [True] * len(path)})
    plain = json.dumps({"path": [list(c) for c in path]})
    seen = []

    def complete(prompt):
        seen.append(prompt)
        return good if "checks" in prompt else plain

    for mode in ("open", "mcq", "binary"):
        report = run(RunConfig(mode=mode, render=False), [inst], ScriptedVerifier(completions=complete))
        assert report.accuracy == 1.0, mode
    assert ["checks" in p for p in seen] == [False, False, True]
    rejected = json.dumps({"path": [list(c) for c in path], "checks": [False] + [True] * (len(path) - 1)})
    report = run(RunConfig(mode="binary"), [inst], ScriptedVerifier(completions=lambda p: rejected))
    assert report.accuracy == 0.0 and report.records[0].detail["self_rejected"]


def test_spatial_grid_binary_end_to_end(tmp_path):
    from binverify.raster import RasterImage, save_png

    save_png(RasterImage.blank(50, 50), tmp_path / "scene.png")
    line = {"kind": "spatial-grid", "id": "g1", "image": "scene.png", "cell": [3, 3], "grid": [5, 5],
            "categories": ["cat", "dog", "rabbit"], "answer": "dog"}
    items = load_manifest(write_lines(tmp_path / "m.jsonl", [line]))
    v = ScriptedVerifier(lambda q: "dog" in q.prompt)
    report = run(RunConfig(), items, v)
    assert report.accuracy == 1.0 and report.records[0].pattern == "FTF"
