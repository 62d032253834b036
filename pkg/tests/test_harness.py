import json

import pytest

from moma import cli
from moma.backends import LessonSensitiveOracle, format_stage2
from moma.engine import EngineConfig, run_trial
from moma.harness import benchmark, offline
from moma.harness import buildings as B
from moma.harness.metrics import FAILURE_CATEGORIES, build_report, success_rate
from moma.harness.scenarios import (DISTRACTOR_RANGE, DegenerateScenario, _sample, benchmark_scenario,
                                    randomize_scenario)
from moma.harness.solver import minimal_skill_count
from moma.harness.tasks import make_task
from moma.percept import observe
from moma.prompt import BackendResponse
from moma.skills import SkillContext, default_registry
from moma.world import load_world

from conftest import obj, small_config


@pytest.mark.parametrize("task", ["retrieve_soda", "retrieve_marker"])
def test_distractor_counts_in_range(task):
    base = B.load_building("B1")
    for seed in range(500):
        cfg = _sample(base, task, seed, 0, None)
        n = sum(1 for o in cfg["objects"] if o["role"] == "item") - 1
        assert DISTRACTOR_RANGE[0] <= n <= DISTRACTOR_RANGE[1]


def test_scenario_deterministic():
    assert benchmark_scenario("retrieve_soda", 3) == benchmark_scenario("retrieve_soda", 3)


def test_degenerate_scenario(monkeypatch):
    from moma.harness import scenarios
    from moma.harness.solver import Unsolvable

    def never(*a, **k):
        raise Unsolvable("nope")

    monkeypatch.setattr(scenarios, "solve", never)
    with pytest.raises(DegenerateScenario, match="degenerate scenario"):
        randomize_scenario(B.load_building("B1"), "retrieve_soda", 0)


def test_unknown_task():
    with pytest.raises(ValueError):
        randomize_scenario(B.load_building("B1"), "fly", 0)
    with pytest.raises(ValueError):
        benchmark.plan_trials(["fly"], 1)
    with pytest.raises(ValueError):
        benchmark.plan_trials(["retrieve_soda"], 0)


def test_success_rate():
    assert success_rate(7, 10) == 70.0
    with pytest.raises(ValueError):
        success_rate(0, 0)


def test_report_categories_sum_to_failures():
    rows = [{"task_id": "a", "success": True, "failure_category": "none"},
            {"task_id": "a", "success": False, "failure_category": "wrong-object"},
            {"task_id": "b", "success": False, "failure_category": "step-budget"},
            {"task_id": "b", "success": False, "failure_category": "wrong-object"}]
    rep = build_report(rows)
    assert rep.n_trials == 4 and rep.overall == 25.0
    assert sum(rep.histogram.values()) == 3
    assert rep.histogram["wrong-object"] == 2
    text, csv = rep.to_text(), rep.to_csv()
    assert all(c in text for c in FAILURE_CATEGORIES)
    assert csv.splitlines()[0].startswith("task,trials,successes,rate")


def test_phrasing_invariance():
    sc = benchmark_scenario("retrieve_marker", 2)
    runs = [run_trial(make_task("retrieve_marker", p, sc), sc, EngineConfig()) for p in range(3)]
    assert len({r.instruction for r in runs}) == 3
    assert all(r.success for r in runs)
    assert len({json.dumps(r.invocations) for r in runs}) == 1


def test_oracle_matches_solver_count():
    sc = benchmark_scenario("rearrange_chairs", 1)
    task = make_task("rearrange_chairs", 0, sc)
    r = run_trial(task, sc, EngineConfig())
    assert r.success and r.steps == minimal_skill_count(load_world(sc), task.predicate_spec())


def test_offline_dataset_round_trip(tmp_path):
    ds = offline.generate_dataset(8, seed=1)
    assert {(i.skill, i.split) for i in ds} == set(offline.ROWS)
    path = offline.save_dataset(ds, tmp_path / "d.jsonl")
    back = offline.load_dataset(path)
    assert [i.to_dict() for i in back] == [i.to_dict() for i in ds]


def test_offline_rate_arithmetic():
    ds = [i for i in offline.generate_dataset(80, seed=2) if i.skill == "call_elevator"][:20]
    wrong = {i.instance_id for i in ds[:5]}

    class Scripted:
        current = None

        def complete(self, request):
            m = request.metadata
            value = m["truth_value"]
            if self.current in wrong:
                value = next(c.value for c in m["candidates"] if c.value != value)
            marker = next(k for k in m["markers"].ids() if m["markers"].resolve(k).value == value)
            return BackendResponse(format_stage2("marker", marker, None))

    backend = Scripted()
    config = EngineConfig(backend=backend)
    correct = 0
    for inst in ds:
        backend.current = inst.instance_id
        correct += offline.predict(inst, config) == inst.truth
    assert correct == 15
    assert success_rate(correct, len(ds)) == 75.0


def test_offline_zero_error_perfect():
    rep = offline.run_offline_eval(offline.generate_dataset(40, seed=3), EngineConfig())
    assert all(r["rate"] == 100.0 for r in rep.rows.values())
    assert rep.average == 100.0


def test_truth_not_among_candidates(tmp_path):
    d = offline.generate_dataset(1)[0].to_dict()
    d["truth"] = "nonexistent"
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(d) + "\n")
    with pytest.raises(ValueError, match="ground truth not among candidates"):
        offline.load_dataset(p)


def _can_instance():
    cfg = small_config(objects=[obj("regular", "soda can", (5, 7), attributes={"brand": "cola", "diet": "false"}),
                                obj("diet", "soda can", (5, 9), attributes={"brand": "cola", "diet": "true"})])
    ws = load_world(cfg)
    o = observe(ws, None, 1)
    cands = default_registry().get("pick_up_object").candidate_generator(SkillContext(ws, o), 0, ())
    return offline.OfflineInstance("cans", "pick_up_object", "5-10", 0, "Bring me the diet cola.",
                                   "Pick up the diet cola can.", o, cands, "diet")


def test_nosom_same_brand_picks_wrong_can():
    inst = _can_instance()
    assert offline.predict(inst, EngineConfig(mode="BUMBLE")) == "diet"
    assert offline.predict(inst, EngineConfig(mode="BUMBLE_noSoM")) == "regular"


def test_benchmark_writes_outputs(tmp_path):
    report, results = benchmark.run_benchmark(["retrieve_soda"], 1, out_dir=tmp_path)
    assert len(results) == 3 and report.overall == 100.0
    for name in ("results.jsonl", "report.txt", "report.csv"):
        assert (tmp_path / name).exists()
    assert len(list((tmp_path / "trials").iterdir())) == 3


def test_cli_run_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--task", "retrieve_soda", "--trials", "1", "--out", str(out)]) == 0
    assert "retrieve_soda" in capsys.readouterr().out
    assert cli.main(["report", "--runs", str(out)]) == 0


@pytest.mark.parametrize("argv", [
    ["run", "--task", "retrieve_soda", "--mode", "GPT", "--out", "x"],
    ["run", "--task", "fly", "--out", "x"],
    ["run", "--backend", "replay", "--out", "x"],
    ["run", "--backend", "http", "--out", "x"],
    ["report", "--runs", "/nonexistent"],
    ["eval-offline", "--dataset", "/nonexistent.jsonl"],
])
def test_cli_config_errors(argv, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_cli_eval_offline(tmp_path, capsys):
    ds, csv = tmp_path / "d.jsonl", tmp_path / "o.csv"
    assert cli.main(["eval-offline", "--dataset", str(ds), "--generate", "8", "--csv", str(csv)]) == 0
    assert "average" in capsys.readouterr().out
    assert csv.read_text().startswith("skill,n,correct,rate")


def test_cli_memory_curate(tmp_path, capsys):
    sc = benchmark_scenario("retrieve_soda", 0)
    run_trial(make_task("retrieve_soda", 0, sc), sc,
              EngineConfig(mode="COME", backend=LessonSensitiveOracle(), record_truth=True), "t", tmp_path / "t")
    out = tmp_path / "ltm.json"
    assert cli.main(["memory", "curate", "--log", str(tmp_path / "t" / "predictions.jsonl"),
                     "--truth", str(tmp_path / "t" / "truth.json"), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["lessons"]["open_door"]


def test_report_reproducible_via_replay(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--task", "retrieve_marker", "--trials", "1", "--out", str(first)]) == 0
    assert cli.main(["run", "--task", "retrieve_marker", "--trials", "1", "--out", str(second),
                     "--backend", "replay", "--transcript", str(first)]) == 0
    assert (first / "results.jsonl").read_bytes() == (second / "results.jsonl").read_bytes()
    assert (first / "report.txt").read_bytes() == (second / "report.txt").read_bytes()
