import json
import math

import numpy as np
import pytest
import yaml

from roadtrack.app import io as rio
from roadtrack.app.bench import BenchError, bench_results
from roadtrack.app.cli import main
from roadtrack.app.config import ConfigError, config_from_dict, config_to_dict, load_config, scene_config
from roadtrack.app.evaluate import EvaluationError, box_angle_error, evaluate, latency_histogram
from roadtrack.app.pipeline import ExportedTrack, FrameResult, Tracker, run_pipeline
from roadtrack.model import PointCloud
from roadtrack.sim import render_scene, scenario_by_name
from roadtrack.sim.render import GroundTruth

SCENE = "car-pass-toward-3"


def cloud(n=50, stamp=0.1, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.uniform(-20, 20, (n, 3)), "sensor", stamp, rng.uniform(0, 1, n))


def exported(i=1, x=10.0, y=2.0, label="car"):
    return ExportedTrack(
        id=i, x=x, y=y, yaw=0.3, vx=1.0, vy=0.0, yaw_rate=0.01, dims=(4.5, 1.8, 1.5), dim_sigma=(0.1, 0.1, 0.1),
        existence=0.9, cls={"car": 1.0}, label=label, fit_kind="l_shape", age=4, coasting=False,
    )


def truth_at(stamp, x=10.0, y=2.0, name="a", label="car", n=100):
    return stamp, (GroundTruth(name, label, x, y, 0.3, 1.0, 0.0, 0.0, (4.5, 1.8, 1.5), n, True),)


def test_binary_frame_round_trip(tmp_path):
    c = cloud()
    p = rio.write_frame(tmp_path, 3, c)
    assert p.name == "000003_100000.bin"
    back = rio.read_frame(p)
    np.testing.assert_allclose(back.xyz, c.xyz.astype(np.float32), rtol=0, atol=0)
    assert back.stamp == pytest.approx(0.1)


def test_ascii_frame_round_trip_and_errors(tmp_path):
    c = cloud(stamp=2.5)
    back = rio.read_frame(rio.write_frame(tmp_path, 0, c, ascii=True))
    np.testing.assert_allclose(back.xyz, c.xyz, atol=1e-6)
    assert rio.decode_ascii("1 2 3\n").intensity.tolist() == [0.0]
    with pytest.raises(rio.DataError):
        rio.decode_ascii("1 2\n")
    with pytest.raises(rio.DataError):
        rio.decode_ascii("1 x 3\n")
    with pytest.raises(rio.DataError):
        rio.decode_binary(b"\x05\x00\x00\x00")


def test_frames_sorted_by_index(tmp_path):
    for i in (2, 0, 1):
        rio.write_frame(tmp_path, i, cloud(stamp=0.1 * (i + 1)))
    (tmp_path / "notes.txt").write_text("ignored")
    assert [round(c.stamp, 6) for c in rio.read_frames(tmp_path)] == [0.1, 0.2, 0.3]
    with pytest.raises(rio.DataError):
        rio.list_frames(tmp_path / "missing")


def test_results_and_truth_round_trip(tmp_path):
    res = [FrameResult(0.1, (exported(),), {"detect": 1.5}, 3.0)]
    rio.write_results(tmp_path / "o.jsonl", res)
    back = rio.read_results(tmp_path / "o.jsonl")
    assert back[0].tracks[0].yaw == pytest.approx(0.3)
    assert back[0].tracks[0].dims == (4.5, 1.8, 1.5) and back[0].tracks[0].cls == {"car": 1.0}
    assert back[0].total_ms == 3.0
    rio.write_results(tmp_path / "n.jsonl", res, timing=False)
    assert "timing" not in json.loads((tmp_path / "n.jsonl").read_text())
    rio.write_truth(tmp_path / "t.jsonl", [truth_at(0.1)])
    stamp, gts = rio.read_truth(tmp_path / "t.jsonl")[0]
    assert stamp == 0.1 and gts[0].yaw == pytest.approx(0.3) and gts[0].dynamic
    (tmp_path / "bad.jsonl").write_text('{"stamp": 1}\n')
    with pytest.raises(rio.DataError):
        rio.read_results(tmp_path / "bad.jsonl")


def test_evaluate_perfect_and_offset():
    truth = [truth_at(0.1 * k) for k in range(1, 11)]
    perfect = [FrameResult(s, (exported(),)) for s, _ in truth]
    r = evaluate(perfect, truth)
    assert r.rmse_position == 0.0 and r.detection_rate == 1.0 and r.class_accuracy == 1.0
    assert r.id_switches == 0 and r.false_positives == 0
    shifted = [FrameResult(s, (exported(x=10.3),)) for s, _ in truth]
    r = evaluate(shifted, truth)
    assert r.rmse_forward == pytest.approx(0.3) and r.rmse_lateral == 0.0


def test_evaluate_counts_switches_false_positives_and_misses():
    truth = [truth_at(0.1 * k) for k in range(1, 7)]
    res = [FrameResult(s, (exported(i=1 if k < 3 else 2), exported(i=9, x=30.0))) for k, (s, _) in enumerate(truth)]
    r = evaluate(res, truth)
    assert r.id_switches == 1 and r.ids_per_actor["a"] == (1, 2)
    assert r.false_positive_ids == (9,)
    r = evaluate([FrameResult(s, ()) for s, _ in truth], truth)
    assert r.missed_actors == ("a",) and r.detection_rate == 0.0


def test_evaluate_gates_and_min_points():
    truth = [truth_at(0.1, n=5), truth_at(0.2)]
    res = [FrameResult(0.1, ()), FrameResult(0.2, (exported(x=13.0),))]
    r = evaluate(res, truth)
    assert r.n_truth == 1 and r.n_matched == 0
    with pytest.raises(EvaluationError):
        evaluate([FrameResult(50.0, ())], truth)


def test_box_angle_error_is_modulo_half_turn():
    assert box_angle_error(0.1, 0.1 + math.pi) == pytest.approx(0.0, abs=1e-12)
    assert box_angle_error(math.radians(95), 0.0) == pytest.approx(math.radians(-85))


def test_latency_histogram_sums():
    totals = [1, 15, 99, 150, 55]
    h = latency_histogram(totals)
    assert sum(h) == len(totals) and h[-1] == 1


def test_bench_thresholds():
    res = [FrameResult(0.1 * k, (), {"detect": 2.0}, float(k % 120), 1000) for k in range(200)]
    rep = bench_results(res, deadline_ms=1e9)
    assert rep.deadline_fraction == 1.0 and sum(rep.histogram) == 200
    assert bench_results(res).deadline_fraction == pytest.approx(np.mean([k % 120 < 100 for k in range(200)]))
    assert len(rep.histogram_lines()) == len(rep.histogram)
    with pytest.raises(BenchError):
        bench_results(res[:99])


@pytest.fixture(scope="module")
def rendered():
    sc = scenario_by_name(SCENE)
    frames = list(render_scene(sc))
    return sc, [f.cloud for f in frames], [(f.cloud.stamp, f.truth) for f in frames]


def strip(results):
    return [[(t.id, t.x, t.y, t.yaw, t.dims, t.existence, t.label) for t in r.tracks] for r in results]


def test_pipeline_deterministic_and_tracks_car(rendered):
    sc, clouds, truth = rendered
    cfg = scene_config(load_config(), sc)
    a = list(run_pipeline(clouds, cfg))
    b = list(run_pipeline(clouds, cfg))
    assert strip(a) == strip(b)
    rep = evaluate(a, truth)
    assert rep.detection_rate > 0.9 and not rep.missed_actors and rep.id_switches == 0
    assert set(a[0].timings) == {"preprocess", "predict", "detect", "associate", "manage", "export"}


def test_pipeline_empty_stream_and_out_of_order():
    assert list(run_pipeline([], load_config())) == []
    tr = Tracker(load_config())
    assert tr.step(cloud(stamp=1.0)) is not None
    assert tr.step(cloud(stamp=0.5)) is None
    assert tr.step(cloud(stamp=1.0)) is None
    assert tr.rejected_frames == 2


def test_config_defaults_round_trip(tmp_path):
    cfg = load_config()
    d = config_to_dict(cfg)
    assert config_to_dict(config_from_dict(d)) == d
    assert cfg.preprocess.sensor_transform.pitch == pytest.approx(math.radians(20.0))
    assert cfg.manage.grid.alpha == 0.92
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"associate": {"c_max": 3.0}, "detect": {"cluster_tolerance": 0.5}}))
    got = load_config(p)
    assert got.c_max == 3.0 and got.detect.cluster_tolerance == 0.5


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict({"bogus": {}})
    with pytest.raises(ConfigError):
        config_from_dict({"detect": {"nope": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"associate": {"c_max": -1.0}})
    p = tmp_path / "c.yaml"
    p.write_text("- a list\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_cli_end_to_end(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", SCENE, str(out)]) == 0
    assert (out / "truth.jsonl").exists() and (out / "scene.yaml").exists()
    obj = tmp_path / "o.jsonl"
    assert main(["track", str(out / "frames"), "-o", str(obj), "-c", str(out / "config.yaml")]) == 0
    capsys.readouterr()
    assert main(["eval", str(obj), str(out / "truth.jsonl"), "--csv", str(tmp_path / "m.csv")]) == 0
    text = capsys.readouterr().out
    assert "rmse_position" in text and "existence_gap" in text
    assert (tmp_path / "m.csv").read_text().startswith("metric,value")
    assert main(["bench", str(out / "frames"), "-c", str(out / "config.yaml"), "--repeat", "2"]) == 0
    assert "deadline_fraction" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--list"]) == 0
    assert SCENE in capsys.readouterr().out
    assert main(["simulate", "no-such-scene", str(tmp_path / "x")]) == 1
    assert main(["track", str(tmp_path / "missing"), "-o", str(tmp_path / "o.jsonl")]) == 2
    assert main(["eval", str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")]) == 2
    assert main(["bench", str(tmp_path / "missing")]) == 2
    assert main(["nonsense"]) == 1


def test_cli_convert_and_fit_classes(tmp_path, capsys):
    xyz = np.random.default_rng(1).uniform(-5, 5, (30, 4)).astype("<f4")
    (tmp_path / "a.bin").write_bytes(xyz.tobytes())
    np.savetxt(tmp_path / "b.csv", xyz[:, :3], delimiter=",", header="x,y,z", comments="")
    assert main(["convert", str(tmp_path / "a.bin"), str(tmp_path / "b.csv"), "-o", str(tmp_path / "f")]) == 0
    clouds = list(rio.read_frames(tmp_path / "f"))
    assert [len(c) for c in clouds] == [30, 30] and clouds[1].stamp == pytest.approx(0.1)
    rows = ["class,length,width,height"] + [f"car,{4.4 + k / 10},{1.8},{1.5 + k / 20}" for k in range(3)]
    (tmp_path / "l.csv").write_text("\n".join(rows) + "\n")
    assert main(["fit-classes", str(tmp_path / "l.csv")]) == 0
    assert "car" in capsys.readouterr().out
