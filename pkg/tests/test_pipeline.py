import json
import shutil
from pathlib import Path

import networkx as nx
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from aimp.cas import hash_path
from aimp.errors import (
    BadPath, CycleDetected, DuplicateOut, DuplicateStage, ExecutionFailed, IncompleteLock, MissingDep,
    MissingOut, MissingParam, PipelineSyntaxError,
)
from aimp.pipeline import (
    LockFile, build_dag, fingerprint_stage, load_workspace, parse_pipeline, read_params, record_execution,
    run_pipeline, status,
)
from aimp.pipeline.record import file_class
from aimp.pipeline.spec import resolve_params

from support import DEMO_STAGES, invocations

FIG7 = """
name: fig7
stages:
  DICOM2NIFTI: {cmd: convert, deps: [dicom], outs: [nifti]}
  Preprocess: {cmd: prep, deps: [nifti], outs: [pre], params: [image_size, maskcrop]}
  Prepare: {cmd: split, deps: [pre], outs: [prepared]}
"""


def spec_of(stages: dict, **top) -> str:
    return yaml.safe_dump({"name": "t", **top, "stages": stages}, sort_keys=False)


# -- spec ----------------------------------------------------------------------


def test_fig7_chain_parses():
    spec = parse_pipeline(FIG7)
    assert spec.stage_names == ["DICOM2NIFTI", "Preprocess", "Prepare"]
    assert spec.stage("Preprocess").params == ("image_size", "maskcrop")
    assert build_dag(spec).order == ("DICOM2NIFTI", "Preprocess", "Prepare")


def test_duplicate_out():
    with pytest.raises(DuplicateOut) as err:
        parse_pipeline(spec_of({"A": {"cmd": "a", "outs": ["data/x"]}, "B": {"cmd": "b", "outs": ["data/x"]}}))
    assert (err.value.stage_a, err.value.stage_b) == ("A", "B")


def test_nested_out_counts_as_duplicate():
    with pytest.raises(DuplicateOut):
        parse_pipeline(spec_of({"A": {"cmd": "a", "outs": ["data"]}, "B": {"cmd": "b", "outs": ["data/x"]}}))


@pytest.mark.parametrize("path", ["../secret", "/etc/passwd", "a/../../b", "C:\\x", "."])
def test_bad_paths(path):
    with pytest.raises(BadPath):
        parse_pipeline(spec_of({"A": {"cmd": "a", "deps": [path]}}))


def test_duplicate_stage_name():
    with pytest.raises(DuplicateStage):
        parse_pipeline("stages:\n  A: {cmd: a}\n  A: {cmd: b}\n")


@pytest.mark.parametrize("text, line", [
    ("stages:\n  A: {cmd: a}\nbogus: 1\n", 3),
    ("stages:\n  A:\n    deps: [x]\n", 2),
    ("stages:\n  A: {cmd: a, colour: red}\n", 2),
    ("stages:\n  A: [\n", 3),
])
def test_syntax_errors_carry_lines(text, line):
    with pytest.raises(PipelineSyntaxError) as err:
        parse_pipeline(text)
    assert err.value.line == line


def test_tool_version_kept_verbatim():
    spec = parse_pipeline("stages:\n  A: {cmd: a, tool: {name: x, version: 2.10}}\n")
    assert spec.stage("A").tool.version == "2.10"


def test_model_artifact_must_be_an_out():
    with pytest.raises(PipelineSyntaxError):
        parse_pipeline(spec_of({"A": {"cmd": "a", "outs": ["m"]}}, model={"stage": "A", "artifact": "other"}))


def test_section_params_select_children():
    snap = resolve_params(["split"], {"split.seed": 7, "split.val_fraction": 0.25, "other": 1})
    assert sorted(snap) == ["split.seed", "split.val_fraction"]
    assert snap["split.val_fraction"].lexical == "0.25"
    with pytest.raises(MissingParam):
        resolve_params(["nope"], {})


# -- DAG -----------------------------------------------------------------------------


def test_edge_and_order():
    dag = build_dag(parse_pipeline(spec_of({"B": {"cmd": "b", "deps": ["x"]}, "A": {"cmd": "a", "outs": ["x"]}})))
    assert dag.edges == (("A", "B"),)
    assert dag.order == ("A", "B")


def test_two_stage_cycle_path():
    spec = parse_pipeline(spec_of({
        "A": {"cmd": "a", "deps": ["y"], "outs": ["x"]},
        "B": {"cmd": "b", "deps": ["x"], "outs": ["y"]},
    }))
    with pytest.raises(CycleDetected) as err:
        build_dag(spec)
    assert err.value.cycle == ["A", "B", "A"]


def test_long_cycle_reports_full_path():
    stages = {n: {"cmd": n, "deps": [f"f{(i - 1) % 4}"], "outs": [f"f{i}"]} for i, n in enumerate("PQRS")}
    stages["Z"] = {"cmd": "z", "deps": ["f3"]}
    with pytest.raises(CycleDetected) as err:
        build_dag(parse_pipeline(spec_of(stages)))
    assert err.value.cycle == ["P", "Q", "R", "S", "P"]


def test_plan_byte_stable():
    text = Path("demo/aimp-pipeline.yaml").read_text() if Path("demo").exists() else FIG7
    plans = {build_dag(parse_pipeline(text)).plan_text().encode() for _ in range(10)}
    assert len(plans) == 1


@st.composite
def random_dags(draw):
    n = draw(st.integers(1, 9))
    names = [f"S{i}" for i in range(n)]
    stages = {}
    for i, name in enumerate(names):
        parents = draw(st.lists(st.integers(0, i - 1), unique=True, max_size=3)) if i else []
        stages[name] = {"cmd": name, "deps": [f"o{p}" for p in parents], "outs": [f"o{i}"]}
    order = draw(st.permutations(names))
    return {k: stages[k] for k in order}


@settings(max_examples=200, deadline=None)
@given(random_dags())
def test_topological_order_matches_networkx(stages):
    dag = build_dag(parse_pipeline(spec_of(stages)))
    g = nx.DiGraph()
    g.add_nodes_from(stages)
    g.add_edges_from(dag.edges)
    expected = list(nx.lexicographical_topological_sort(g))
    assert list(dag.order) == expected
    position = {n: i for i, n in enumerate(dag.order)}
    assert all(position[a] < position[b] for a, b in dag.edges)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["a", "b", "c", "d", "e", "f"]), unique=True, max_size=3),
                min_size=1, max_size=5))
def test_exactly_one_producer(outs_per_stage):
    stages = {f"S{i}": {"cmd": "x", "outs": outs} for i, outs in enumerate(outs_per_stage)}
    flat = [o for outs in outs_per_stage for o in outs]
    if len(flat) != len(set(flat)):
        with pytest.raises(DuplicateOut):
            parse_pipeline(spec_of(stages))
    else:
        spec = parse_pipeline(spec_of(stages))
        producers = {o: s.name for s in spec.stages for o in s.outs}
        assert len(producers) == len(flat)


# -- a small fast workspace ------------------------------------------------------------

SMALL = {
    "A": {"cmd": "(cat in.txt; grep ^alpha params.yaml) > a.txt", "deps": ["in.txt"], "outs": ["a.txt"], "params": ["alpha"]},
    "B": {"cmd": "cat a.txt a.txt > b.txt", "deps": ["a.txt"], "outs": ["b.txt"]},
    "C": {"cmd": "echo c > c.txt", "deps": ["side.txt"], "outs": ["c.txt"], "params": ["gamma"]},
}


@pytest.fixture
def small(tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    (ws / "in.txt").write_text("hello\n")
    (ws / "side.txt").write_text("side\n")
    (ws / "params.yaml").write_text("alpha: 1\ngamma: {x: 2}\nunused: 3\n")
    (ws / "aimp-pipeline.yaml").write_text(spec_of(SMALL))
    return ws


def reasons(ws):
    spec, lock = load_workspace(ws)
    return {s.stage: s.reason for s in status(spec, lock, ws)}


def run(ws, **kw):
    spec, _ = load_workspace(ws)
    return run_pipeline(spec, ws, **kw)


def test_fingerprint_determinism_and_sensitivity(small):
    spec, _ = load_workspace(small)
    stage = spec.stage("A")
    params = read_params(spec, small)
    fp = fingerprint_stage(stage, params, small)
    assert fp == fingerprint_stage(stage, params, small)
    assert fingerprint_stage(stage, {**params, "unused": 99}, small).digest == fp.digest
    assert fingerprint_stage(stage, {**params, "alpha": 2}, small).digest != fp.digest
    (small / "in.txt").write_bytes(b"hellp\n")
    assert fingerprint_stage(stage, params, small).digest != fp.digest


def test_fingerprint_missing_dep(small):
    spec, _ = load_workspace(small)
    (small / "in.txt").unlink()
    with pytest.raises(MissingDep):
        fingerprint_stage(spec.stage("A"), read_params(spec, small), small)


def test_status_lifecycle(small):
    assert set(reasons(small).values()) == {"never-run"}
    first = run(small)
    assert [o.status for o in first.outcomes] == ["fresh"] * 3
    assert set(reasons(small).values()) == {"up-to-date"}
    second = run(small)
    assert [o.status for o in second.outcomes] == ["cached"] * 3 and second.executed == []

    (small / "b.txt").unlink()
    assert reasons(small)["B"] == "out-missing"
    run(small)
    (small / "b.txt").write_text("edited by hand\n")
    assert reasons(small)["B"] == "out-changed"
    assert run(small).executed == ["B"]

    (small / "params.yaml").write_text("alpha: 2\ngamma: {x: 2}\nunused: 3\n")
    assert reasons(small) == {"A": "param-changed", "B": "upstream-stale", "C": "up-to-date"}
    run(small)
    (small / "side.txt").write_text("changed\n")
    assert reasons(small)["C"] == "dep-changed"


def test_command_change(small):
    run(small)
    changed = dict(SMALL, C={**SMALL["C"], "cmd": "echo cc > c.txt"})
    (small / "aimp-pipeline.yaml").write_text(spec_of(changed))
    assert reasons(small)["C"] == "command-changed"
    assert run(small).executed == ["C"]


def test_failure_skips_descendants_only(small):
    broken = dict(SMALL, A={**SMALL["A"], "cmd": "exit 7"})
    (small / "aimp-pipeline.yaml").write_text(spec_of(broken))
    report = run(small, raise_on_failure=False)
    assert {o.stage: o.status for o in report.outcomes} == {"A": "failed", "B": "skipped", "C": "fresh"}
    assert isinstance(report.outcome("A").error, ExecutionFailed)
    assert report.outcome("A").error.returncode == 7
    lock = LockFile.read(small / "aimp.lock")
    assert lock.get("A").exit_code == 7 and lock.get("B") is None
    assert reasons(small)["A"] == "failed"
    with pytest.raises(ExecutionFailed):
        run(small)


def test_missing_out_is_a_failure(small):
    broken = dict(SMALL, C={**SMALL["C"], "cmd": "true"})
    (small / "aimp-pipeline.yaml").write_text(spec_of(broken))
    with pytest.raises(MissingOut):
        run(small)


def test_missing_dep_is_fatal(small):
    (small / "side.txt").unlink()
    with pytest.raises(MissingDep) as err:
        run(small)
    statuses = {o.stage: o.status for o in err.value.report.outcomes}
    assert statuses["C"] == "failed"
    assert (small / "aimp.lock").exists()


def test_force_and_single_stage(small):
    run(small)
    assert run(small, force=True).executed == ["A", "B", "C"]
    assert run(small, only_stage="C", force=True).executed == ["C"]


def test_parallel_run_equivalent(small, tmp_path):
    other = tmp_path / "ws2"
    shutil.copytree(small, other)
    serial = run(small).lock
    parallel = run(other, jobs=3).lock
    assert {n: r.fingerprint for n, r in serial.records.items()} == {n: r.fingerprint for n, r in parallel.records.items()}


def test_logs_and_outs_enter_the_store(small):
    from aimp.cas import ObjectStore

    lock = run(small).lock
    store = ObjectStore(small / ".aimp")
    for rec in lock.records.values():
        for ref in [*rec.deps.values(), *rec.outs.values(), rec.stdout, rec.stderr]:
            assert store.verify_object(ref.sha256)


def test_lock_json_round_trip(small):
    lock = run(small).lock
    again = LockFile.read(small / "aimp.lock")
    assert again.to_bytes() == lock.to_bytes()
    assert json.loads(lock.to_bytes())["formatVersion"] == "1"


# -- cache completeness ----------------------------------------------------------------

def _mutations(ws):
    yield "A", lambda: (ws / "in.txt").write_bytes(b"hellO\n")
    yield "C", lambda: (ws / "side.txt").write_bytes(b"sidE\n")
    yield "A", lambda: (ws / "params.yaml").write_text("alpha: 5\ngamma: {x: 2}\nunused: 3\n")
    yield "C", lambda: (ws / "params.yaml").write_text("alpha: 1\ngamma: {x: 3}\nunused: 3\n")
    yield None, lambda: (ws / "params.yaml").write_text("alpha: 1\ngamma: {x: 2}\nunused: 4\n")


@pytest.mark.parametrize("index", range(5))
def test_each_change_flips_exactly_stage_and_descendants(small, index):
    run(small)
    target, mutate = list(_mutations(small))[index]
    mutate()
    spec, _ = load_workspace(small)
    dag = build_dag(spec)
    expected = set() if target is None else {target} | dag.descendants(target)
    stale = {n for n, r in reasons(small).items() if r != "up-to-date"}
    assert stale == expected
    assert set(run(small).executed) == expected


# -- demo ------------------------------------------------------------------------------------


def test_demo_cache_counters(demo):
    report = run(demo)
    assert [o.status for o in report.outcomes] == ["fresh"] * 4
    assert invocations(demo) == DEMO_STAGES
    assert [o.status for o in run(demo).outcomes] == ["cached"] * 4
    assert invocations(demo) == []

    params = demo / "params.yaml"
    params.write_text(params.read_text().replace("image_size: 256", "image_size: 128"))
    report = run(demo)
    assert {o.stage: o.status for o in report.outcomes} == {
        "DICOM2NIFTI": "cached", "Preprocess": "fresh", "Prepare": "fresh", "Train": "fresh"}
    assert invocations(demo) == ["Preprocess", "Prepare", "Train"]


def test_demo_graph(demo):
    spec, _ = load_workspace(demo)
    lock = run(demo).lock
    g = record_execution(lock, spec)
    assert g.validate() == []
    assert len(g.nodes_of_class("aimp:StageExecution")) == 4
    train = g.node("aimp:demo/execution/Train")
    hp = {k.rsplit("/", 1)[1]: v.lexical for k, v in train.attributes.items() if "HyperParameterSetting" in k}
    assert hp == {"train.architecture": "U-Net", "train.epochs": "5", "train.learning_rate": "0.001"}
    pre = g.node("aimp:demo/execution/Preprocess")
    assert {k.rsplit("/", 1)[1] for k in pre.attributes if "HyperParameterSetting" in k} == {"image_size", "maskcrop"}
    model = [n for n in g.nodes_of_class("mls:Model")]
    assert [n.attributes["aimp:path"].lexical for n in model] == ["models/model.bin"]
    scripts = sorted(n.attributes["aimp:path"].lexical for n in g.nodes_of_class("aimp:Script"))
    assert scripts == sorted(f"scripts/{s}.py" for s in ("dicom2nifti", "preprocess", "prepare", "train"))
    # the data handed from one stage to the next is a single entity
    prepared = [n for n in g.nodes if n.attributes.get("aimp:path") and n.attributes["aimp:path"].lexical == "data/prepared"]
    assert len(prepared) == 1


def test_empty_pipeline_graph():
    g = record_execution(LockFile(), parse_pipeline("name: empty\nstages: {}\n"))
    assert sorted(n.kind.class_iri for n in g.nodes) == ["aimp:Experiment", "aimp:Pipeline", "aimp:Study"]
    assert g.validate() == []


def test_incomplete_lock(small):
    spec, _ = load_workspace(small)
    with pytest.raises(IncompleteLock):
        record_execution(LockFile(), spec)


def test_file_classes():
    spec = parse_pipeline(spec_of({"A": {"cmd": "./run data.csv", "deps": ["run", "data.csv"], "outs": ["m.bin"]}},
                                  model={"stage": "A", "artifact": "m.bin"}))
    stage = spec.stage("A")
    assert [file_class(p, stage, spec) for p in ("run", "data.csv", "m.bin", "x.py")] == [
        "aimp:Script", "dcat:Dataset", "mls:Model", "aimp:Script"]


def test_run_keeps_hashes_consistent(demo):
    lock = run(demo).lock
    for rec in lock.records.values():
        for path, ref in rec.outs.items():
            assert hash_path(demo / path) == ref
