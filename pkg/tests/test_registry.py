import random
import shutil
import threading

import pytest
from structlog.testing import capture_logs

from backend.errors import (
    BlobIntegrityError,
    DuplicateParameter,
    EmptyChallenge,
    FlowConflict,
    InvalidParameterValue,
    InvalidTaskDefinition,
    NotAChallengeTask,
    ParseFailed,
    ScoreOutOfRange,
    UnknownAttribute,
    UnknownDataset,
    UnknownMeasure,
    UnknownParameter,
    UnknownTask,
    ValidationFailed,
)
from backend.formats import encode_container, parse_arff
from backend.registry import open_store, queries
from backend.registry.store import Store
from factories import (
    TWO_ROW_ARFF,
    binary_arff,
    classification_csv,
    flow_spec,
    regression_arff,
    regression_csv,
)


def _coins(store, name="coins", relation="coins"):
    reg = store.register_dataset(binary_arff(relation=relation).encode("utf-8"), "arff", name, "y")
    return reg.record.dataset_id


def _task(store, dataset_id, folds=2):
    return store.create_task(dataset_id, procedure={"folds": folds}).task


def _run(store, task, flow_id, settings=None, wrong=()):
    ds = store.load_dataset(task.dataset_id)
    return store.submit_run(task.task_id, flow_id, settings or {}, classification_csv(task, ds, wrong=wrong))


def _solve(store, challenge_id, task, name, wrong=()):
    ds = store.load_dataset(task.dataset_id)
    return store.submit_solution(challenge_id, task.task_id, name, classification_csv(task, ds, wrong=wrong))


# datasets


def test_register_dataset(store):
    reg = store.register_dataset(binary_arff().encode("utf-8"), "arff", "coins", "y")
    assert reg.created
    record = reg.record
    assert record.dataset_id == 1
    assert record.version == 1
    assert record.meta_features.n_instances == 10
    assert record.meta_features.n_classes == 2
    assert store.load_dataset(1).n_instances == 10


def test_same_bytes_twice_is_idempotent(store):
    blob = binary_arff().encode("utf-8")
    first = store.register_dataset(blob, "arff", "coins", "y")
    again = store.register_dataset(blob, "arff", "coins", "y")
    assert not again.created
    assert again.record == first.record
    assert store.counts()["datasets"] == 1


def test_new_bytes_under_same_name_bump_version(store):
    store.register_dataset(binary_arff().encode("utf-8"), "arff", "coins")
    second = store.register_dataset(binary_arff(relation="coins2").encode("utf-8"), "arff", "coins")
    assert second.record.version == 2
    assert second.record.dataset_id == 2


def test_container_uploads_are_accepted(store):
    blob = encode_container(parse_arff(TWO_ROW_ARFF))
    record = store.register_dataset(blob, "mld", "tiny", "c").record
    assert record.format == "mld"
    _, stored = store.get_dataset_blob(record.dataset_id)
    assert stored == blob


def test_bad_uploads(store):
    with pytest.raises(ParseFailed) as exc_info:
        store.register_dataset(b"@relation t\n@data\n", "arff", "broken")
    assert exc_info.value.details[0]["code"] == "missing_section"
    with pytest.raises(ParseFailed):
        store.register_dataset(TWO_ROW_ARFF.encode("utf-8"), "csv", "tiny")
    with pytest.raises(ParseFailed):
        store.register_dataset(TWO_ROW_ARFF.encode("utf-8"), "arff", "")
    with pytest.raises(UnknownAttribute):
        store.register_dataset(TWO_ROW_ARFF.encode("utf-8"), "arff", "tiny", "nope")
    assert store.counts()["datasets"] == 0


# flows


def test_register_flow_is_idempotent(store):
    first = store.register_flow(flow_spec())
    assert first.created and first.record.flow_id == 1
    again = store.register_flow(flow_spec(description="same schema, other words"))
    assert not again.created
    assert again.record.flow_id == 1


def test_flow_schema_conflict(store):
    store.register_flow(flow_spec())
    with pytest.raises(FlowConflict):
        store.register_flow(flow_spec(parameters=[{"name": "max_depth", "kind": "float"}]))
    assert store.register_flow(flow_spec(version="1.1")).record.flow_id == 2


def test_duplicate_parameter(store):
    params = [{"name": "c", "kind": "float"}, {"name": "c", "kind": "int"}]
    with pytest.raises(DuplicateParameter):
        store.register_flow(flow_spec(parameters=params))


def test_flow_defaults_are_coerced(store):
    record = store.register_flow(
        flow_spec(parameters=[{"name": "gamma", "kind": "float", "default": 1}])
    ).record
    assert record.parameter("gamma").default == 1.0
    assert isinstance(record.parameter("gamma").default, float)
    with pytest.raises(InvalidParameterValue):
        store.register_flow(flow_spec(name="bad", parameters=[{"name": "k", "kind": "int", "default": "x"}]))


# tasks


def test_create_task_uses_default_target(store):
    dataset_id = _coins(store)
    stored = store.create_task(dataset_id, procedure={"folds": 2})
    assert stored.task_id == 1
    assert stored.task.target == "y"
    assert stored.task.name == "Predict y of coins"
    assert store.snapshot.task(1) == stored


def test_create_task_errors(store):
    with pytest.raises(UnknownDataset):
        store.create_task(42, target="y")
    reg = store.register_dataset(binary_arff().encode("utf-8"), "arff", "coins")
    with pytest.raises(InvalidTaskDefinition):
        store.create_task(reg.record.dataset_id)
    assert store.counts()["tasks"] == 0


# runs


def test_submit_run(store):
    task = _task(store, _coins(store))
    flow_id = store.register_flow(flow_spec()).record.flow_id
    run = _run(store, task, flow_id, {"max_depth": "3", "prune": "true"}, wrong=[0])
    assert run.run_id == 1
    assert run.evaluation.mean(task.primary_measure) == pytest.approx(0.9)
    assert [(s.name, s.value) for s in run.parameter_settings] == [("max_depth", 3), ("prune", True)]
    assert store.get_predictions(run.run_id).startswith(",".join(task.submission_schema) + "\n")


def test_unknown_parameter(store):
    task = _task(store, _coins(store))
    flow_id = store.register_flow(flow_spec()).record.flow_id
    with pytest.raises(UnknownParameter):
        _run(store, task, flow_id, {"max_deth": 3})
    with pytest.raises(InvalidParameterValue):
        _run(store, task, flow_id, {"max_depth": "deep"})


def test_failed_validation_persists_nothing(store):
    task = _task(store, _coins(store))
    flow_id = store.register_flow(flow_spec()).record.flow_id
    log = store.root / "log" / "runs.jsonl"
    blobs_before = sorted(p.name for p in (store.root / "blobs").iterdir())
    ds = store.load_dataset(task.dataset_id)
    with pytest.raises(ValidationFailed) as exc_info:
        store.submit_run(task.task_id, flow_id, {}, classification_csv(task, ds, skip=[3]))
    assert exc_info.value.details == [{"kind": "MissingPrediction", "repeat": 0, "row_index": 3}]
    assert store.counts()["runs"] == 0
    assert log.read_bytes() == b""
    assert sorted(p.name for p in (store.root / "blobs").iterdir()) == blobs_before


def test_concurrent_submissions_get_distinct_ids(store):
    task = _task(store, _coins(store))
    flow_id = store.register_flow(flow_spec()).record.flow_id
    ds = store.load_dataset(task.dataset_id)
    csv = classification_csv(task, ds)
    results = []

    def submit():
        results.append(store.submit_run(task.task_id, flow_id, {}, csv).run_id)

    threads = [threading.Thread(target=submit) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(results) == list(range(1, 9))
    assert queries.check_runs(store.snapshot) == []


def test_snapshots_are_isolated_from_later_writes(store):
    task = _task(store, _coins(store))
    flow_id = store.register_flow(flow_spec()).record.flow_id
    before = store.snapshot
    _run(store, task, flow_id)
    assert len(before.runs) == 0
    assert len(store.snapshot.runs) == 1


# leaderboard


def test_leaderboard_orders_by_score(store):
    dataset_id = _coins(store)
    task = _task(store, dataset_id)
    flow_id = store.register_flow(flow_spec()).record.flow_id
    worse = _run(store, task, flow_id, {"max_depth": 1}, wrong=[0, 6])
    better = _run(store, task, flow_id, {"max_depth": 3}, wrong=[0])
    board = queries.leaderboard(store.snapshot, dataset_id, "predictive_accuracy")
    assert [e.run_id for e in board] == [better.run_id, worse.run_id]
    assert [e.score for e in board] == pytest.approx([0.9, 0.8])
    assert [e.rank for e in board] == [1, 2]
    assert board[0].flow == "dtree 1.0"
    assert board[0].settings == {"max_depth": 3}


def test_leaderboard_ties_go_to_earlier_upload(store):
    dataset_id = _coins(store)
    task = _task(store, dataset_id)
    first_flow = store.register_flow(flow_spec(name="first")).record.flow_id
    second_flow = store.register_flow(flow_spec(name="second")).record.flow_id
    early = _run(store, task, first_flow, wrong=[0])
    late = _run(store, task, second_flow, wrong=[0])
    board = queries.leaderboard(store.snapshot, dataset_id, "predictive_accuracy")
    assert [e.run_id for e in board] == [early.run_id, late.run_id]


def test_leaderboard_keeps_best_run_per_setting(store):
    dataset_id = _coins(store)
    task = _task(store, dataset_id)
    flow_id = store.register_flow(flow_spec()).record.flow_id
    _run(store, task, flow_id, {"max_depth": 2}, wrong=[0, 6])
    best = _run(store, task, flow_id, {"max_depth": 2}, wrong=[0])
    board = queries.leaderboard(store.snapshot, dataset_id, "predictive_accuracy")
    assert len(board) == 1
    assert board[0].run_id == best.run_id


def test_leaderboard_edge_cases(store):
    dataset_id = _coins(store)
    assert queries.leaderboard(store.snapshot, dataset_id, "predictive_accuracy") == []
    with pytest.raises(UnknownDataset):
        queries.leaderboard(store.snapshot, 99, "predictive_accuracy")
    with pytest.raises(UnknownMeasure):
        queries.leaderboard(store.snapshot, dataset_id, "speed")


def test_leaderboard_top_is_the_best_run(tmp_path):
    rng = random.Random(17)
    for trial in range(5):
        with open_store(tmp_path / f"db{trial}") as s:
            dataset_id = _coins(s)
            task = _task(s, dataset_id)
            flows = [s.register_flow(flow_spec(name=f"f{i}")).record.flow_id for i in range(3)]
            for _ in range(6):
                wrong = rng.sample(range(10), rng.randint(0, 5))
                _run(s, task, rng.choice(flows), {"max_depth": rng.randint(1, 3)}, wrong=wrong)
            scores = [run.evaluation.mean("predictive_accuracy") for run in s.snapshot.runs.values()]
            board = queries.leaderboard(s.snapshot, dataset_id, "predictive_accuracy")
            assert board[0].score == max(scores)
            assert all(a.score >= b.score for a, b in zip(board, board[1:]))


# flow overview and parameter impact


def test_flow_overview(store):
    dataset_id = _coins(store)
    first, second = _task(store, dataset_id), _task(store, dataset_id)
    flow_id = store.register_flow(flow_spec()).record.flow_id
    assert queries.flow_overview(store.snapshot, flow_id).tasks == []

    _run(store, first, flow_id, {"max_depth": 1}, wrong=[0, 6])
    best = _run(store, first, flow_id, {"max_depth": 3}, wrong=[0])
    _run(store, second, flow_id)
    overview = queries.flow_overview(store.snapshot, flow_id)
    assert [g.task_id for g in overview.tasks] == [first.task_id, second.task_id]
    group = overview.tasks[0]
    assert len(group.results) == 2
    assert group.results[0].best and group.results[0].run_id == best.run_id
    assert not group.results[1].best
    assert group.best_score == pytest.approx(0.9)


def test_parameter_impact(store):
    dataset_id = _coins(store)
    task = _task(store, dataset_id)
    flow_id = store.register_flow(flow_spec()).record.flow_id
    _run(store, task, flow_id, {"max_depth": 3}, wrong=[0, 6])
    _run(store, task, flow_id, {"max_depth": 1}, wrong=[0, 1, 6, 7])
    impact = queries.parameter_impact(store.snapshot, flow_id, "max_depth", "predictive_accuracy")
    assert [(r.value, r.n_runs) for r in impact.rows] == [(1, 1), (3, 1)]
    assert [r.mean_score for r in impact.rows] == pytest.approx([0.6, 0.8])


def test_parameter_impact_single_value_and_defaults(store):
    dataset_id = _coins(store)
    task = _task(store, dataset_id)
    flow_id = store.register_flow(flow_spec()).record.flow_id
    _run(store, task, flow_id, {"max_depth": 5}, wrong=[0])
    _run(store, task, flow_id, {}, wrong=[0, 6])
    _run(store, task, flow_id, {"criterion": "entropy"})
    impact = queries.parameter_impact(
        store.snapshot, flow_id, "max_depth", "predictive_accuracy", dataset_id=dataset_id
    )
    assert len(impact.rows) == 1
    assert impact.rows[0].value == 5
    assert impact.rows[0].n_runs == 3
    with pytest.raises(UnknownParameter):
        queries.parameter_impact(store.snapshot, flow_id, "depth", "predictive_accuracy")


# compare


def test_compare(store):
    d1 = _coins(store, "coins")
    d2 = _coins(store, "tokens", relation="tokens")
    t1, t2 = _task(store, d1), _task(store, d2)
    f1 = store.register_flow(flow_spec(name="alpha")).record.flow_id
    f2 = store.register_flow(flow_spec(name="beta")).record.flow_id
    _run(store, t1, f1, wrong=[0])
    _run(store, t1, f1, wrong=[0, 6])
    _run(store, t2, f1)
    _run(store, t1, f2, wrong=[0, 6])

    table = queries.compare(store.snapshot, [f1, f2], [d1, d2], "predictive_accuracy")
    assert [f.name for f in table.flows] == ["alpha 1.0", "beta 1.0"]
    assert [d.name for d in table.datasets] == ["coins v1", "tokens v1"]
    assert table.cells[0] == pytest.approx([0.9, 1.0])
    assert table.cells[1][0] == pytest.approx(0.8)
    assert table.cells[1][1] is None

    csv = queries.comparison_csv(table)
    lines = csv.splitlines()
    assert lines[0] == "flow,coins v1,tokens v1"
    assert lines[2].startswith("beta 1.0,") and lines[2].endswith(",")


def test_one_by_one_compare_matches_leaderboard(store):
    dataset_id = _coins(store)
    task = _task(store, dataset_id)
    flow_id = store.register_flow(flow_spec()).record.flow_id
    _run(store, task, flow_id, {"max_depth": 1}, wrong=[0, 1])
    _run(store, task, flow_id, {"max_depth": 2}, wrong=[4])
    table = queries.compare(store.snapshot, [flow_id], [dataset_id], "predictive_accuracy")
    board = queries.leaderboard(store.snapshot, dataset_id, "predictive_accuracy")
    assert table.cells == [[board[0].score]]


# challenges


def test_challenge_rank_table(store):
    dataset_id = _coins(store)
    first, second = _task(store, dataset_id), _task(store, dataset_id)
    challenge = store.create_challenge("coin flip", [first.task_id, second.task_id])

    _solve(store, challenge.challenge_id, first, "alpha")
    _solve(store, challenge.challenge_id, first, "beta", wrong=[0])
    _solve(store, challenge.challenge_id, first, "gamma", wrong=[0, 6])

    _solve(store, challenge.challenge_id, second, "beta")
    _solve(store, challenge.challenge_id, second, "alpha", wrong=[0])
    _solve(store, challenge.challenge_id, second, "gamma", wrong=[0, 6])
    _solve(store, challenge.challenge_id, second, "delta", wrong=[0, 1, 6])

    board = queries.challenge_leaderboard(store.snapshot, challenge.challenge_id)
    table = [(e.rank, e.participant, e.mean_rank) for e in board.entries]
    assert table == [(1, "alpha", 1.5), (2, "beta", 1.5), (3, "gamma", 3.0), (4, "delta", 4.0)]
    delta = board.entries[3]
    assert [(r.rank, r.score) for r in delta.task_ranks][0] == (4, None)
    assert all(e.kind == "solution" for e in board.entries)


def test_challenge_winner_and_flow_participants(store):
    dataset_id = _coins(store)
    first, second = _task(store, dataset_id), _task(store, dataset_id)
    challenge = store.create_challenge("duo", [first.task_id, second.task_id, first.task_id])
    assert challenge.task_ids == [first.task_id, second.task_id]
    flow_id = store.register_flow(flow_spec()).record.flow_id

    _solve(store, challenge.challenge_id, first, "champ")
    _solve(store, challenge.challenge_id, second, "champ")
    _run(store, first, flow_id, wrong=[0])

    entries = queries.challenge_leaderboard(store.snapshot, challenge.challenge_id).entries
    assert (entries[0].participant, entries[0].mean_rank, entries[0].rank) == ("champ", 1.0, 1)
    assert (entries[1].participant, entries[1].kind, entries[1].flow_id) == ("dtree 1.0", "flow", flow_id)
    assert entries[1].mean_rank == 2.0


def test_solutions_stay_with_their_challenge(store):
    task = _task(store, _coins(store))
    cup = store.create_challenge("cup", [task.task_id])
    shield = store.create_challenge("shield", [task.task_id])
    flow_id = store.register_flow(flow_spec()).record.flow_id
    _solve(store, cup.challenge_id, task, "cup only")
    _run(store, task, flow_id, wrong=[0])

    def participants(challenge):
        board = queries.challenge_leaderboard(store.snapshot, challenge.challenge_id)
        return [e.participant for e in board.entries]

    assert participants(cup) == ["cup only", "dtree 1.0"]
    assert participants(shield) == ["dtree 1.0"]


def test_challenge_errors(store):
    dataset_id = _coins(store)
    task = _task(store, dataset_id)
    other = _task(store, dataset_id)
    with pytest.raises(EmptyChallenge):
        store.create_challenge("empty", [])
    with pytest.raises(UnknownTask):
        store.create_challenge("ghost", [task.task_id, 99])
    challenge = store.create_challenge("one", [task.task_id])
    with pytest.raises(NotAChallengeTask):
        _solve(store, challenge.challenge_id, other, "x")
    with pytest.raises(ParseFailed):
        _solve(store, challenge.challenge_id, task, "")


# search and listing


def test_search(store):
    store.register_dataset(TWO_ROW_ARFF.encode("utf-8"), "arff", "iris", "c")
    store.register_flow(flow_spec(name="weka.J48", description="pruned tree"))
    hits = queries.search(store.snapshot, "iris")
    assert [(h.kind, h.id, h.match_field) for h in hits] == [("dataset", 1, "name")]
    assert queries.search(store.snapshot, "IRIS") == hits
    assert queries.search(store.snapshot, "nothing like it") == []
    assert queries.search(store.snapshot, "  ") == []
    assert [h.match_field for h in queries.search(store.snapshot, "PRUNED")] == ["description"]


def test_search_finds_tasks_by_name(store):
    dataset_id = _coins(store)
    _task(store, dataset_id)
    hits = queries.search(store.snapshot, "coins")
    assert [h.kind for h in hits] == ["dataset", "task"]


def test_list_records_pages_and_filters(store):
    task = _task(store, _coins(store))
    f1 = store.register_flow(flow_spec(name="a")).record.flow_id
    f2 = store.register_flow(flow_spec(name="b")).record.flow_id
    for flow_id in (f1, f2, f1):
        _run(store, task, flow_id)
    runs = queries.list_records(store.snapshot, "runs", flow_id=f1)
    assert [r.run_id for r in runs] == [1, 3]
    assert [r.run_id for r in queries.list_records(store.snapshot, "runs", limit=1, offset=1)] == [2]


# durability


def _fill(root):
    with open_store(root) as s:
        for i in range(3):
            s.register_flow(flow_spec(name=f"flow{i}"))


def test_records_survive_reopen(tmp_path):
    root = tmp_path / "db"
    with open_store(root) as s:
        task = _task(s, _coins(s))
        flow_id = s.register_flow(flow_spec()).record.flow_id
        run = _run(s, task, flow_id, wrong=[0])
        before = s.snapshot
    with open_store(root) as s:
        assert s.counts() == {"datasets": 1, "flows": 1, "tasks": 1, "challenges": 0, "runs": 1}
        assert s.snapshot.run(run.run_id) == before.run(run.run_id)
        assert s.snapshot.task(task.task_id).task == task
        assert s.register_flow(flow_spec(name="next")).record.flow_id == 2


def test_extreme_regression_scores_survive_reopen(tmp_path):
    root = tmp_path / "db"
    offsets = (1e154, 1e200)
    with open_store(root) as s:
        houses = s.register_dataset(regression_arff().encode("utf-8"), "arff", "houses", "price")
        task = _task(s, houses.record.dataset_id, folds=3)
        flow_id = s.register_flow(flow_spec()).record.flow_id
        ds = s.load_dataset(task.dataset_id)
        runs = [
            s.submit_run(task.task_id, flow_id, {}, regression_csv(task, ds, offset=offset))
            for offset in offsets
        ]
    for run, offset in zip(runs, offsets):
        assert run.evaluation.mean("root_mean_squared_error") == pytest.approx(offset)
        assert run.evaluation.mean("mean_absolute_error") == pytest.approx(offset)
    with open_store(root) as s:
        assert s.counts()["runs"] == 2
        for run in runs:
            assert s.snapshot.run(run.run_id) == run


def test_unrepresentable_score_persists_nothing(store):
    far = "@relation far\n@attribute x numeric\n@attribute y numeric\n@data\n" + "1,-1.5e308\n" * 4
    dataset_id = store.register_dataset(far.encode("utf-8"), "arff", "far", "y").record.dataset_id
    task = _task(store, dataset_id)
    flow_id = store.register_flow(flow_spec()).record.flow_id
    lines = [",".join(task.submission_schema)]
    lines += [f"0,{fold},{row},1.5e308" for row, fold in enumerate(task.splits[0])]
    with pytest.raises(ScoreOutOfRange):
        store.submit_run(task.task_id, flow_id, {}, "\n".join(lines) + "\n")
    assert store.counts()["runs"] == 0
    assert (store.root / "log" / "runs.jsonl").read_bytes() == b""


def test_decoded_dataset_cache_is_bounded(tmp_path):
    with Store(tmp_path / "db", dataset_cache_size=2).open() as s:
        ids = [_coins(s, name=f"coins{i}", relation=f"coins{i}") for i in range(4)]
        for dataset_id in ids:
            assert s.load_dataset(dataset_id).n_instances == 10
        info = s._decoded.cache_info()
        assert (info.currsize, info.maxsize, info.misses) == (2, 2, 4)
        s.load_dataset(ids[-1])
        assert s._decoded.cache_info().hits == info.hits + 1


def test_partial_trailing_line_is_discarded(tmp_path):
    root = tmp_path / "db"
    _fill(root)
    log = root / "log" / "flows.jsonl"
    complete = log.read_bytes()
    with open(log, "ab") as handle:
        handle.write(b'{"flow_id": 4, "name": "half')
    with capture_logs() as logs:
        with open_store(root) as s:
            assert s.counts()["flows"] == 3
    assert log.read_bytes() == complete
    assert any(entry["event"] == "partial_line_discarded" for entry in logs)


def test_truncation_at_any_offset_keeps_complete_records(tmp_path):
    root = tmp_path / "db"
    _fill(root)
    data = (root / "log" / "flows.jsonl").read_bytes()
    rng = random.Random(4)
    for trial, offset in enumerate(sorted(rng.sample(range(len(data) + 1), 20))):
        copy = tmp_path / f"copy{trial}"
        shutil.copytree(root, copy)
        (copy / "log" / "flows.jsonl").write_bytes(data[:offset])
        with open_store(copy) as s:
            assert s.counts()["flows"] == data[:offset].count(b"\n")


def test_corrupt_and_dangling_lines_are_skipped(tmp_path):
    root = tmp_path / "db"
    with open_store(root) as s:
        task = _task(s, _coins(s))
        flow_id = s.register_flow(flow_spec()).record.flow_id
        _run(s, task, flow_id)
    runs_log = root / "log" / "runs.jsonl"
    good = runs_log.read_bytes()
    dangling = good.replace(b'"task_id":1', b'"task_id":7').replace(b'"run_id":1', b'"run_id":2')
    flows_log = root / "log" / "flows.jsonl"
    flows_log.write_bytes(b"not json at all\n" + flows_log.read_bytes())
    runs_log.write_bytes(good + dangling)
    with capture_logs() as logs:
        with open_store(root) as s:
            assert s.counts()["flows"] == 1
            assert s.counts()["runs"] == 1
    events = {entry["event"] for entry in logs}
    assert {"corrupt_record_skipped", "dangling_record_skipped"} <= events


def test_blob_digest_mismatch(store):
    dataset_id = _coins(store)
    record = store.snapshot.dataset(dataset_id)
    (store.root / "blobs" / record.digest).write_bytes(b"tampered")
    with pytest.raises(BlobIntegrityError):
        store.get_dataset_blob(dataset_id)
