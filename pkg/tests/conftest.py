import json
import time

import numpy as np
import pytest

from billiardcap.cli import main

DOMAINS = {
    "disk": {"dim": 2, "shape": "ball", "params": {"center": [0.0, 0.0], "radius": 1.0}},
    "ball3": {"dim": 3, "shape": "ball", "params": {"center": [0.0, 0.0, 0.0], "radius": 1.0}},
    "disk_r2": {"dim": 2, "shape": "ball", "params": {"center": [0.0, 0.0], "radius": 2.0}},
    "ellipse": {"dim": 2, "shape": "ellipsoid", "params": {"center": [0.0, 0.0], "semi_axes": [2.0, 1.0]}},
    "box": {"dim": 2, "shape": "smoothed_box",
            "params": {"center": [0.0, 0.0], "half_widths": [2.0, 1.0], "corner_radius": 0.2}},
    "dumbbell": {"dim": 2, "shape": "dumbbell",
                 "params": {"centers": [[-2.0, 0.0], [2.0, 0.0]], "radii": [1.0, 1.0],
                            "neck_half_width": 0.2, "blend": 0.2}},
}

CRITERIA = {
    1: "ball n=2,3: length 4, two bounces, ratio 4, under 60 s",
    2: "scaling: ball r=2 doubles the length",
    3: "ellipse and smoothed box: length 4*min half-width, reflection, crosscheck",
    4: "dumbbell: at most n+1 bounces, ratio <= 10, crosscheck",
    5: "action gradient vs finite differences, Hessian spot checks",
    6: "EL residual and energy spread at every accepted critical point",
    7: "Morse index bound and dense-eigensolver agreement",
    8: "tau-length identity and unit speed on segments",
    9: "period ceiling tau <= 196*kinetic + 1",
    10: "reflection oracle and ellipse invariant over 1000 bounces",
    11: "determinism of report.json",
}


def write_domain(path, name):
    path.write_text(json.dumps(DOMAINS[name]))
    return str(path)


class _FindRuns:
    """Runs ``billiardcap find`` once per domain and keeps the outputs."""

    def __init__(self, factory):
        self.factory = factory
        self.cache = {}

    def __call__(self, name, tag="a"):
        key = (name, tag)
        if key not in self.cache:
            base = self.factory.mktemp(f"find_{name}_{tag}")
            dom = write_domain(base / "domain.json", name)
            out = base / "out"
            t0 = time.perf_counter()
            code = main(["find", "--domain", dom, "--out", str(out)])
            elapsed = time.perf_counter() - t0
            report = json.loads((out / "report.json").read_text())
            self.cache[key] = {"code": code, "elapsed": elapsed, "out": out, "report": report}
        return self.cache[key]


@pytest.fixture(scope="session")
def find_run(tmp_path_factory):
    return _FindRuns(tmp_path_factory)


@pytest.fixture(scope="session")
def acceptance(request):
    results = request.config._acceptance_results = {}

    def record(k, ok, detail):
        results[k] = (bool(ok), detail)
        print(f"CRITERION {k:2d} {'PASS' if ok else 'FAIL'}: {CRITERIA[k]} | {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", None)
    if results is None:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        if k in results:
            ok, detail = results[k]
            line = f"CRITERION {k:2d} {'PASS' if ok else 'FAIL'}: {CRITERIA[k]} | {detail}"
        else:
            line = f"CRITERION {k:2d} NOT RUN: {CRITERIA[k]}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
