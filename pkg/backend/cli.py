"""
Command-line client for the experiment database.

``run_command`` is the whole program: it parses ``argv``, talks to the API
(or works offline for ``convert`` and ``dataset summarize``) and returns
``(exit_code, stdout, stderr)``. Exit codes: 0 success, 1 usage error,
2 server/API error, 3 local I/O or parse error.
"""

import argparse
import io
import json
import sys
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import requests

from backend.config import server_url_from_env
from backend.errors import ExpDBError
from backend.formats import READABLE, WRITABLE, convert, format_from_path, read_dataset
from backend.metadata import compute_meta_features, dataset_summary, render_summary

API = "/api/v1"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_API = 2
EXIT_LOCAL = 3


class CliError(Exception):
    exit_code = EXIT_LOCAL


class UsageError(CliError):
    exit_code = EXIT_USAGE


class ApiError(CliError):
    exit_code = EXIT_API


class LocalError(CliError):
    exit_code = EXIT_LOCAL


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports problems as exceptions instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise _Exit(status)


class ApiClient:
    def __init__(self, base_url: str, session=None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.timeout = timeout

    def request(self, method: str, path: str, **kwargs):
        url = f"{self.base_url}{path}"
        try:
            response = self.session.request(method, url, timeout=self.timeout, **kwargs)
        except requests.RequestException as exc:
            raise ApiError(f"cannot reach {self.base_url}: {exc}") from None
        if response.status_code >= 400:
            raise ApiError(_error_summary(response))
        return response

    def get(self, path: str, **params):
        return self.request("GET", path, params={k: v for k, v in params.items() if v is not None})

    def post_json(self, path: str, body: dict):
        return self.request("POST", path, json=body)


def _error_summary(response) -> str:
    try:
        error = response.json()["error"]
        return f"{error['code']}: {error['message']}"
    except (ValueError, KeyError, TypeError):
        return f"HTTP {response.status_code}"


# rendering


def _table(rows: List[Dict[str, Any]], columns: Sequence[str]) -> str:
    if not rows:
        return "(no rows)"
    return pd.DataFrame(rows, columns=list(columns)).to_string(index=False)


def _pairs(items: Sequence[Tuple[str, Any]]) -> str:
    width = max(len(k) for k, _ in items)
    return "\n".join(f"{k.ljust(width)}  {'' if v is None else v}" for k, v in items)


def _settings_text(settings: Dict[str, Any]) -> str:
    return ", ".join(f"{k}={v}" for k, v in sorted(settings.items())) or "-"


def _evaluation_text(evaluation: dict) -> str:
    rows = [
        {"measure": m, "mean": s["mean"], "stdev": s["stdev"], "folds": len(s["folds"])}
        for m, s in evaluation["measures"].items()
    ]
    text = _table(rows, ["measure", "mean", "stdev", "folds"])
    flags = [f for s in evaluation["measures"].values() for f in s["flags"]]
    if flags:
        text += "\n" + "\n".join(f"note: {f}" for f in flags)
    return text


def _task_text(task: dict) -> str:
    procedure = task["procedure"]
    return _pairs(
        [
            ("task_id", task["task_id"]),
            ("name", task["name"]),
            ("type", task["type"]),
            ("dataset_id", task["dataset_id"]),
            ("target", task["target"]),
            ("folds", procedure["folds"]),
            ("repeats", procedure["repeats"]),
            ("seed", procedure["seed"]),
            ("stratified", procedure["stratified"]),
            ("measures", ", ".join(task["measures"])),
            ("excluded_rows", len(task["excluded_rows"])),
        ]
    )


def _run_text(run: dict) -> str:
    head = [("run_id", run["run_id"]), ("task_id", run["task_id"])]
    if run.get("flow_id") is not None:
        head.append(("flow_id", run["flow_id"]))
    if run.get("solution_name"):
        head += [("solution", run["solution_name"]), ("challenge_id", run.get("challenge_id"))]
    if "parameter_settings" in run:
        settings = {s["name"]: s["value"] for s in run["parameter_settings"]}
        head.append(("settings", _settings_text(settings)))
    return _pairs(head) + "\n\n" + _evaluation_text(run["evaluation"])


# commands


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise LocalError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write_bytes(path: str, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise LocalError(f"cannot write {path}: {exc.strerror or exc}") from None


def _ids(raw: str, what: str) -> List[int]:
    try:
        ids = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of ids") from None
    if not ids:
        raise UsageError(f"{what} must name at least one id")
    return ids


def _setting(raw: str) -> Tuple[str, Any]:
    name, sep, value = raw.partition("=")
    if not sep or not name:
        raise UsageError(f"settings look like name=value, got {raw!r}")
    try:
        return name, json.loads(value)
    except ValueError:
        return name, value


def _emit(args, response, human) -> None:
    if args.json:
        sys.stdout.write(response.text)
    else:
        print(human(response.json()))


def cmd_dataset_upload(args, client: ApiClient) -> None:
    blob = _read_bytes(args.file)
    fmt = args.format or _local(format_from_path, args.file)
    if fmt not in READABLE:
        raise UsageError(f"cannot upload {fmt!r} files; use one of {', '.join(READABLE)}")
    params = {"format": fmt, "name": args.name, "target": args.target, "description": args.description}
    response = client.request(
        "POST", f"{API}/datasets", params={k: v for k, v in params.items() if v}, data=blob
    )
    verb = "registered" if response.status_code == 201 else "already registered"
    _emit(args, response, lambda d: f"dataset {d['dataset_id']} {d['name']} v{d['version']} {verb}")


def _dataset_text(d: dict) -> str:
    meta = d["meta_features"]
    return _pairs(
        [
            ("dataset_id", d["dataset_id"]),
            ("name", d["name"]),
            ("version", d["version"]),
            ("format", d["format"]),
            ("default_target", d["default_target"]),
            ("instances", meta["n_instances"]),
            ("attributes", meta["n_attributes"]),
            ("missing values", meta["n_missing_values"]),
            ("classes", meta["n_classes"]),
            ("default accuracy", meta["default_accuracy"]),
            ("digest", d["digest"]),
        ]
    )


def cmd_dataset_get(args, client: ApiClient) -> None:
    _emit(args, client.get(f"{API}/datasets/{args.id}"), _dataset_text)


def cmd_dataset_file(args, client: ApiClient) -> None:
    if args.format == "mld" and not args.output:
        raise UsageError("binary mld downloads need --output")
    response = client.get(f"{API}/datasets/{args.id}/file", format=args.format)
    binary = response.headers.get("content-type", "").startswith("application/octet-stream")
    if binary and not args.output:
        raise UsageError("binary mld downloads need --output")
    if args.output:
        _write_bytes(args.output, response.content)
        print(f"wrote {args.output} ({len(response.content)} bytes)")
    else:
        sys.stdout.write(response.content.decode("utf-8"))


def _local(fn, *args):
    try:
        return fn(*args)
    except ExpDBError as exc:
        raise LocalError(exc.message) from None


def cmd_dataset_summarize(args, client: Optional[ApiClient]) -> None:
    fmt = args.format or _local(format_from_path, args.file)
    ds = _local(read_dataset, _read_bytes(args.file), fmt)
    summary = dataset_summary(ds)
    meta = _local(compute_meta_features, ds, args.target)
    if args.json:
        body = {"summary": summary.model_dump(mode="json"), "meta_features": meta.model_dump(mode="json")}
        sys.stdout.write(json.dumps(body, separators=(",", ":"), ensure_ascii=False))
    else:
        print(render_summary(summary, meta))


def _leaderboard_text(entries: list) -> str:
    rows = [
        {
            "rank": e["rank"],
            "flow": e["flow"],
            "settings": _settings_text(e["settings"]),
            "run_id": e["run_id"],
            "score": e["score"],
        }
        for e in entries
    ]
    return _table(rows, ["rank", "flow", "settings", "run_id", "score"])


def cmd_dataset_leaderboard(args, client: ApiClient) -> None:
    response = client.get(f"{API}/datasets/{args.id}/leaderboard", measure=args.measure)
    _emit(args, response, _leaderboard_text)


def cmd_task_create(args, client: ApiClient) -> None:
    procedure = {
        key: value
        for key, value in (
            ("folds", args.folds),
            ("repeats", args.repeats),
            ("seed", args.seed),
            ("stratified", args.stratified),
        )
        if value is not None
    }
    body: Dict[str, Any] = {"dataset_id": args.dataset}
    if args.target:
        body["target"] = args.target
    if args.type:
        body["type"] = args.type
    if procedure:
        body["procedure"] = procedure
    if args.measures:
        body["measures"] = [m.strip() for m in args.measures.split(",") if m.strip()]
    _emit(args, client.post_json(f"{API}/tasks", body), _task_text)


def cmd_task_get(args, client: ApiClient) -> None:
    _emit(args, client.get(f"{API}/tasks/{args.id}"), _task_text)


def _flow_text(f: dict) -> str:
    head = _pairs(
        [
            ("flow_id", f["flow_id"]),
            ("name", f["name"]),
            ("version", f["version"]),
            ("task_types", ", ".join(f["properties"]["task_types"]) or "-"),
            ("handles_missing", f["properties"]["handles_missing"]),
            ("handles_nominal", f["properties"]["handles_nominal"]),
        ]
    )
    return head + "\n\n" + _table(f["parameters"], ["name", "kind", "default"])


def cmd_flow_register(args, client: ApiClient) -> None:
    try:
        body = json.loads(_read_bytes(args.file).decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise LocalError(f"{args.file} is not a JSON document: {exc}") from None
    response = client.post_json(f"{API}/flows", body)
    verb = "registered" if response.status_code == 201 else "already registered"
    _emit(args, response, lambda d: f"flow {d['flow_id']} {d['name']} {d['version']} {verb}")


def cmd_flow_get(args, client: ApiClient) -> None:
    _emit(args, client.get(f"{API}/flows/{args.id}"), _flow_text)


def _overview_text(overview: dict) -> str:
    if not overview["tasks"]:
        return f"flow {overview['flow']} has no runs"
    blocks = []
    for group in overview["tasks"]:
        rows = [
            {
                "best": "*" if r["best"] else "",
                "settings": _settings_text(r["settings"]),
                "score": r["score"],
                "runs": r["n_runs"],
                "run_id": r["run_id"],
            }
            for r in group["results"]
        ]
        blocks.append(
            f"task {group['task_id']}: {group['task_name']} ({group['measure']}, best {group['best_score']})\n"
            + _table(rows, ["best", "settings", "score", "runs", "run_id"])
        )
    return "\n\n".join(blocks)


def cmd_flow_overview(args, client: ApiClient) -> None:
    _emit(args, client.get(f"{API}/flows/{args.id}/overview"), _overview_text)


def cmd_flow_param_impact(args, client: ApiClient) -> None:
    response = client.get(
        f"{API}/flows/{args.id}/parameter-impact",
        param=args.param,
        measure=args.measure,
        dataset=args.dataset,
    )
    _emit(args, response, lambda d: _table(d["rows"], ["value", "n_runs", "mean_score"]))


def _predictions_text(path: str) -> str:
    try:
        return _read_bytes(path).decode("utf-8")
    except UnicodeDecodeError:
        raise LocalError(f"{path} is not UTF-8 text") from None


def cmd_run_submit(args, client: ApiClient) -> None:
    predictions = _predictions_text(args.predictions)
    settings = dict(_setting(raw) for raw in args.set or [])
    body = {"task_id": args.task, "flow_id": args.flow, "settings": settings, "predictions": predictions}
    _emit(args, client.post_json(f"{API}/runs", body), _run_text)


def cmd_run_get(args, client: ApiClient) -> None:
    _emit(args, client.get(f"{API}/runs/{args.id}"), _run_text)


def _challenge_text(c: dict) -> str:
    return _pairs(
        [
            ("challenge_id", c["challenge_id"]),
            ("name", c["name"]),
            ("tasks", ", ".join(str(t) for t in c["task_ids"])),
            ("aggregate", c["aggregate_rule"]),
        ]
    )


def cmd_challenge_create(args, client: ApiClient) -> None:
    body = {"name": args.name, "task_ids": _ids(args.tasks, "--tasks"), "description": args.description or ""}
    _emit(args, client.post_json(f"{API}/challenges", body), _challenge_text)


def cmd_challenge_get(args, client: ApiClient) -> None:
    _emit(args, client.get(f"{API}/challenges/{args.id}"), _challenge_text)


def _challenge_board_text(board: dict) -> str:
    rows = [
        {
            "rank": e["rank"],
            "participant": e["participant"],
            "kind": e["kind"],
            "mean_rank": e["mean_rank"],
            "task_ranks": " ".join(f"{r['task_id']}:{r['rank']}" for r in e["task_ranks"]),
        }
        for e in board["entries"]
    ]
    return f"challenge {board['challenge_id']}: {board['name']}\n" + _table(
        rows, ["rank", "participant", "kind", "mean_rank", "task_ranks"]
    )


def cmd_challenge_leaderboard(args, client: ApiClient) -> None:
    _emit(args, client.get(f"{API}/challenges/{args.id}/leaderboard"), _challenge_board_text)


def cmd_challenge_solve(args, client: ApiClient) -> None:
    predictions = _predictions_text(args.predictions)
    body = {"task_id": args.task, "name": args.name, "predictions": predictions}
    _emit(args, client.post_json(f"{API}/challenges/{args.id}/solutions", body), _run_text)


def cmd_search(args, client: ApiClient) -> None:
    response = client.get(f"{API}/search", q=args.query)
    _emit(args, response, lambda hits: _table(hits, ["kind", "id", "name", "match_field"]))


def _compare_text(table: dict) -> str:
    columns = [d["name"] for d in table["datasets"]]
    rows = []
    for flow, cells in zip(table["flows"], table["cells"]):
        row = {"flow": flow["name"]}
        row.update({c: ("" if v is None else v) for c, v in zip(columns, cells)})
        rows.append(row)
    return f"measure: {table['measure']}\n" + _table(rows, ["flow"] + columns)


def cmd_compare(args, client: ApiClient) -> None:
    response = client.get(
        f"{API}/compare",
        flows=",".join(str(i) for i in _ids(args.flows, "--flows")),
        datasets=",".join(str(i) for i in _ids(args.datasets, "--datasets")),
        measure=args.measure,
        format=args.format,
    )
    if args.format == "csv":
        if args.output:
            _write_bytes(args.output, response.content)
            print(f"wrote {args.output} ({len(response.content)} bytes)")
        else:
            sys.stdout.write(response.text)
        return
    _emit(args, response, _compare_text)


def cmd_convert(args, client: Optional[ApiClient]) -> None:
    source = args.source or _local(format_from_path, args.input)
    target = args.target or _local(format_from_path, args.output)
    if source not in READABLE:
        raise UsageError(f"cannot read {source!r} files; use one of {', '.join(READABLE)}")
    data = _local(convert, _read_bytes(args.input), source, target)
    _write_bytes(args.output, data)
    if args.json:
        sys.stdout.write(json.dumps({"output": args.output, "format": target, "bytes": len(data)}))
    else:
        print(f"wrote {args.output} ({target}, {len(data)} bytes)")


OFFLINE = {cmd_convert, cmd_dataset_summarize}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--server", default=argparse.SUPPRESS, help="API base URL (env EXPDB_SERVER)")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print raw JSON")

    parser = _Parser(prog="expdb", description="Experiment database client")
    parser.add_argument("--server", default=None, help="API base URL (env EXPDB_SERVER)")
    parser.add_argument("--json", action="store_true", default=False, help="print raw JSON")
    groups = parser.add_subparsers(dest="group", metavar="COMMAND", parser_class=_Parser)
    groups.required = True

    def leaf(sub, name, handler, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        return p

    def group(name, help_text):
        g = groups.add_parser(name, help=help_text)
        sub = g.add_subparsers(dest="command", metavar="ACTION", parser_class=_Parser)
        sub.required = True
        return sub

    datasets = group("dataset", "upload, inspect and download datasets")
    p = leaf(datasets, "upload", cmd_dataset_upload, "upload an ARFF or MLD1 file")
    p.add_argument("file")
    p.add_argument("--name", required=True)
    p.add_argument("--format", choices=READABLE)
    p.add_argument("--target")
    p.add_argument("--description")
    p = leaf(datasets, "get", cmd_dataset_get, "show a dataset record")
    p.add_argument("id", type=int)
    p = leaf(datasets, "file", cmd_dataset_file, "download a dataset file")
    p.add_argument("id", type=int)
    p.add_argument("--format", choices=WRITABLE)
    p.add_argument("--output")
    p = leaf(datasets, "summarize", cmd_dataset_summarize, "profile a local dataset file")
    p.add_argument("file")
    p.add_argument("--format", choices=READABLE)
    p.add_argument("--target")
    p = leaf(datasets, "leaderboard", cmd_dataset_leaderboard, "rank flows run on a dataset")
    p.add_argument("id", type=int)
    p.add_argument("--measure", required=True)

    tasks = group("task", "create and fetch tasks")
    p = leaf(tasks, "create", cmd_task_create, "define a task over a dataset")
    p.add_argument("--dataset", type=int, required=True)
    p.add_argument("--target")
    p.add_argument("--type", choices=["supervised_classification", "supervised_regression"])
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--stratified", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--measures", help="comma-separated measure ids")
    p = leaf(tasks, "get", cmd_task_get, "show a task")
    p.add_argument("id", type=int)

    flows = group("flow", "register and inspect flows")
    p = leaf(flows, "register", cmd_flow_register, "register a flow from a JSON file")
    p.add_argument("file")
    p = leaf(flows, "get", cmd_flow_get, "show a flow")
    p.add_argument("id", type=int)
    p = leaf(flows, "overview", cmd_flow_overview, "results of a flow over all tasks")
    p.add_argument("id", type=int)
    p = leaf(flows, "param-impact", cmd_flow_param_impact, "score by parameter value")
    p.add_argument("id", type=int)
    p.add_argument("--param", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--dataset", type=int)

    runs = group("run", "submit and fetch runs")
    p = leaf(runs, "submit", cmd_run_submit, "submit predictions for a task")
    p.add_argument("predictions")
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--flow", type=int, required=True)
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="parameter setting")
    p = leaf(runs, "get", cmd_run_get, "show a run")
    p.add_argument("id", type=int)

    challenges = group("challenge", "group tasks into challenges")
    p = leaf(challenges, "create", cmd_challenge_create, "create a challenge")
    p.add_argument("--name", required=True)
    p.add_argument("--tasks", required=True, help="comma-separated task ids")
    p.add_argument("--description")
    p = leaf(challenges, "get", cmd_challenge_get, "show a challenge")
    p.add_argument("id", type=int)
    p = leaf(challenges, "leaderboard", cmd_challenge_leaderboard, "mean-rank leaderboard")
    p.add_argument("id", type=int)
    p = leaf(challenges, "solve", cmd_challenge_solve, "submit a solution to a challenge task")
    p.add_argument("id", type=int)
    p.add_argument("predictions")
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--name", required=True)

    p = groups.add_parser("search", parents=[common], help="keyword search")
    p.add_argument("query")
    p.set_defaults(handler=cmd_search)

    p = groups.add_parser("compare", parents=[common], help="best scores of flows over datasets")
    p.add_argument("--flows", required=True)
    p.add_argument("--datasets", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--output")
    p.set_defaults(handler=cmd_compare)

    p = groups.add_parser("convert", parents=[common], help="convert a dataset file offline")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--from", dest="source", choices=READABLE)
    p.add_argument("--to", dest="target", choices=WRITABLE)
    p.set_defaults(handler=cmd_convert)

    return parser


def run_command(argv: Sequence[str], server_url: Optional[str] = None, session=None) -> Tuple[int, str, str]:
    """Run one CLI invocation; returns ``(exit_code, stdout, stderr)``."""
    out, err = io.StringIO(), io.StringIO()
    code = EXIT_OK
    with redirect_stdout(out), redirect_stderr(err):
        try:
            args = build_parser().parse_args(list(argv))
            if args.handler in OFFLINE:
                client = None
            else:
                base = args.server or server_url or server_url_from_env()
                client = ApiClient(base, session=session)
            args.handler(args, client)
        except _Exit as exc:
            code = exc.code
        except CliError as exc:
            code = exc.exit_code
            print(f"error: {exc}", file=sys.stderr)
        except Exception as exc:
            code = EXIT_LOCAL
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code, out.getvalue(), err.getvalue()


def main() -> None:
    code, out, err = run_command(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    sys.exit(code)


if __name__ == "__main__":
    main()
