import time
from dataclasses import dataclass, replace

import pytest

from roadtrack.app.config import load_config, scene_config
from roadtrack.app.pipeline import Tracker
from roadtrack.sim import noise_free, render_scene

ACCEPTANCE_LINES = []


@dataclass
class SceneRun:
    results: list
    truth: list
    frames: int
    render_s: float
    track_s: float


class SceneRunner:
    """Renders and tracks scenes once per session; clouds are not kept."""

    def __init__(self):
        self._cache = {}

    def run(self, scene, clean=False):
        key = (scene.name, scene.shake.amplitude, clean)
        if key not in self._cache:
            sc = noise_free(scene) if clean else scene
            tracker = Tracker(scene_config(load_config(), sc))
            results, truth = [], []
            render_s = track_s = 0.0
            t0 = time.perf_counter()
            for f in render_scene(sc):
                t1 = time.perf_counter()
                res = tracker.step(f.cloud)
                t2 = time.perf_counter()
                render_s += t1 - t0
                track_s += t2 - t1
                results.append(res)
                truth.append((f.cloud.stamp, f.truth))
                t0 = time.perf_counter()
            self._cache[key] = SceneRun(results, truth, len(results), render_s, track_s)
        return self._cache[key]


def pooled(runs):
    """Concatenate several runs into one evaluation input.

    Actors are renamed per run and stamps offset so passes never overlap.
    """
    results, truth = [], []
    for k, (name, run) in enumerate(runs):
        off = 1000.0 * k
        results += [replace(r, stamp=r.stamp + off) for r in run.results]
        truth += [(s + off, [replace(g, name=f"{name}/{g.name}") for g in gts]) for s, gts in run.truth]
    return results, truth


@pytest.fixture(scope="session")
def runner():
    return SceneRunner()


@pytest.fixture(scope="session")
def report_line():
    def add(text):
        ACCEPTANCE_LINES.append(text)
        print(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
