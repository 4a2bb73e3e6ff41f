#!/usr/bin/env python3
"""
End-to-end system check against a running experiment database.
Walks the upload -> task -> flow -> run -> leaderboard loop and checks the error schema.
"""

import argparse
import json
import sys
import time
from collections import Counter
from typing import Any, Dict, List, Optional

import requests

API = "/api/v1"

SMOKE_ARFF = """% smoke-test data
@relation smoke_blobs

@attribute x numeric
@attribute y numeric
@attribute label {a,b,c}

@data
""" + "\n".join(
    f"{i * 0.5},{(i % 7) - 3},{'abc'[i % 3] if i % 5 else 'a'}" for i in range(30)
) + "\n"

SMOKE_FLOW = {
    "name": "smoke.majority",
    "version": "1.0",
    "description": "predicts the majority class",
    "parameters": [{"name": "strategy", "kind": "text", "default": "most_frequent"}],
    "properties": {
        "task_types": ["supervised_classification"],
        "handles_missing": True,
        "handles_nominal": True,
    },
}


def majority_predictions(task: Dict[str, Any], labels: List[str]) -> str:
    """Prediction file that always answers the most frequent training label."""
    majority = Counter(labels).most_common(1)[0][0]
    classes = task["class_labels"]
    lines = [",".join(task["submission_schema"])]
    for repeat, folds in enumerate(task["splits"]):
        for row, fold in enumerate(folds):
            if fold < 0:
                continue
            confidences = ["1.0" if c == majority else "0.0" for c in classes]
            lines.append(",".join([str(repeat), str(fold), str(row), majority] + confidences))
    return "\n".join(lines) + "\n"


class SystemTester:
    """
    Step-by-step system check for the experiment database API.
    """

    def __init__(self, base_url: str = "http://localhost:8000", session=None):
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.test_results = []
        self.dataset_id: Optional[int] = None
        self.task: Optional[Dict[str, Any]] = None
        self.flow_id: Optional[int] = None
        self.run_id: Optional[int] = None
        self.name = f"smoke_blobs_{int(time.time())}"

    def log_test(self, test_name: str, success: bool, message: str = ""):
        status = "PASS" if success else "FAIL"
        print(f"{status} {test_name}: {message}")
        self.test_results.append({"test": test_name, "success": success, "message": message})

    def _check(self, test_name: str, fn) -> bool:
        try:
            ok, message = fn()
        except Exception as e:
            ok, message = False, f"Error: {e}"
        self.log_test(test_name, ok, message)
        return ok

    def test_health_check(self) -> bool:
        def check():
            response = self.session.get(f"{self.base_url}/health")
            if response.status_code != 200:
                return False, f"Status code: {response.status_code}"
            return True, f"Status: {response.json().get('status')}"

        return self._check("Health Check", check)

    def test_dataset_upload(self) -> bool:
        def check():
            response = self.session.post(
                f"{self.base_url}{API}/datasets",
                params={"format": "arff", "name": self.name, "target": "label"},
                data=SMOKE_ARFF.encode("utf-8"),
            )
            if response.status_code not in (200, 201):
                return False, f"Status code: {response.status_code}"
            self.dataset_id = response.json()["dataset_id"]
            return True, f"dataset {self.dataset_id}"

        return self._check("Dataset Upload", check)

    def test_task_creation(self) -> bool:
        def check():
            response = self.session.post(
                f"{self.base_url}{API}/tasks",
                json={"dataset_id": self.dataset_id, "procedure": {"folds": 3}},
            )
            if response.status_code != 201:
                return False, f"Status code: {response.status_code}"
            self.task = response.json()
            again = self.session.get(f"{self.base_url}{API}/tasks/{self.task['task_id']}")
            return again.content == response.content, f"task {self.task['task_id']}"

        return self._check("Task Creation", check)

    def test_flow_registration(self) -> bool:
        def check():
            response = self.session.post(f"{self.base_url}{API}/flows", json=SMOKE_FLOW)
            if response.status_code not in (200, 201):
                return False, f"Status code: {response.status_code}"
            self.flow_id = response.json()["flow_id"]
            return True, f"flow {self.flow_id}"

        return self._check("Flow Registration", check)

    def test_run_submission(self) -> bool:
        def check():
            labels = [line.rsplit(",", 1)[1] for line in SMOKE_ARFF.split("@data\n")[1].splitlines()]
            body = {
                "task_id": self.task["task_id"],
                "flow_id": self.flow_id,
                "settings": {"strategy": "most_frequent"},
                "predictions": majority_predictions(self.task, labels),
            }
            response = self.session.post(f"{self.base_url}{API}/runs", json=body)
            if response.status_code != 201:
                return False, f"Status code: {response.status_code}"
            data = response.json()
            self.run_id = data["run_id"]
            accuracy = data["evaluation"]["measures"]["predictive_accuracy"]["mean"]
            return True, f"run {self.run_id}, accuracy {accuracy:.4f}"

        return self._check("Run Submission", check)

    def test_leaderboard(self) -> bool:
        def check():
            response = self.session.get(
                f"{self.base_url}{API}/datasets/{self.dataset_id}/leaderboard",
                params={"measure": "predictive_accuracy"},
            )
            if response.status_code != 200:
                return False, f"Status code: {response.status_code}"
            entries = response.json()
            return bool(entries) and entries[0]["run_id"] == self.run_id, f"{len(entries)} entries"

        return self._check("Leaderboard", check)

    def test_search(self) -> bool:
        def check():
            response = self.session.get(f"{self.base_url}{API}/search", params={"q": self.name.upper()})
            hits = response.json()
            found = any(h["kind"] == "dataset" and h["id"] == self.dataset_id for h in hits)
            return response.status_code == 200 and found, f"{len(hits)} hits"

        return self._check("Search", check)

    def test_error_schema(self) -> bool:
        def check():
            response = self.session.get(f"{self.base_url}{API}/no-such-route")
            error = response.json().get("error", {})
            ok = response.status_code == 404 and {"code", "message", "details"} <= set(error)
            return ok, f"Status code: {response.status_code}, code: {error.get('code')}"

        return self._check("Error Schema", check)

    def run_all_tests(self) -> Dict[str, Any]:
        print(f"Checking experiment database at {self.base_url}")
        steps = [
            self.test_health_check,
            self.test_dataset_upload,
            self.test_task_creation,
            self.test_flow_registration,
            self.test_run_submission,
            self.test_leaderboard,
            self.test_search,
            self.test_error_schema,
        ]
        # later steps need the ids these produce
        required = {self.test_dataset_upload, self.test_task_creation, self.test_flow_registration}
        for step in steps:
            if not step() and step in required:
                break

        total = len(self.test_results)
        passed = sum(1 for r in self.test_results if r["success"])
        print(f"\n{passed}/{total} checks passed")
        return {
            "total_tests": total,
            "passed_tests": passed,
            "success_rate": (passed / total) * 100 if total else 0.0,
            "results": self.test_results,
        }


def main():
    parser = argparse.ArgumentParser(description="Experiment database system check")
    parser.add_argument(
        "--url",
        default="http://localhost:8000",
        help="Base URL of the API (default: http://localhost:8000)",
    )
    parser.add_argument("--output", help="Output file for check results (JSON format)")
    args = parser.parse_args()

    tester = SystemTester(args.url)
    results = tester.run_all_tests()

    if args.output:
        with open(args.output, "w") as f:
            json.dump(results, f, indent=2)
        print(f"\nResults saved to: {args.output}")

    sys.exit(0 if results["passed_tests"] == results["total_tests"] else 1)


if __name__ == "__main__":
    main()
