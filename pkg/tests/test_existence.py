import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roadtrack.detect import Detection
from roadtrack.existence import (
    ExistenceConfig,
    ExistenceFactors,
    age_factor,
    combine,
    compute_factors,
    variability_factor,
)
from roadtrack.manage import ManageConfig, initiate
from roadtrack.model import BoundingBox, HistoryEntry, ModelError, TrackHistory

unit = st.floats(0.0, 1.0)


def make_track(entries, age=None):
    det = Detection(BoundingBox((0, 0), 0.0, (4.5, 1.8, 1.5)), (0.1, 0.1, 0.1), "lshape", 30)
    trk = initiate(det, 0.0, 1, ManageConfig())
    h = TrackHistory(maxlen=50)
    for e in entries:
        h = h.append(e)
    return dataclasses.replace(trk, history=h, age=age or max(1, len(entries)))


def entry(t, associated=True, dims=(4.5, 1.8, 1.5), v=(5.0, 0.0), omega=0.0):
    return HistoryEntry(t, np.array([0, 0, v[0], v[1], 0, omega], dtype=float), associated, dims)


def test_age_factor():
    assert age_factor(5) == 0.5
    assert age_factor(15) > age_factor(6) > age_factor(5) > age_factor(1)
    assert age_factor(5, 0.4, 5.0) == pytest.approx(1 / (1 + math.exp(0)))


def test_variability_factor_examples():
    assert variability_factor([], 1.0) == 1.0
    assert variability_factor([3.0], 1.0) == 1.0
    s = [2.0 - 0.5, 2.0 + 0.5]
    assert np.std(s, ddof=1) == pytest.approx(0.5 * math.sqrt(2))
    assert variability_factor([1.0, 2.0, 3.0], 2.0) == pytest.approx(0.5)
    assert variability_factor([0.0, 10.0], 1.0) == 0.0


def test_combine_examples():
    assert combine(ExistenceFactors(1, 1, 1, 1, 1, 1)) == pytest.approx(1.0, abs=1e-12)
    assert combine(ExistenceFactors(*[0.5] * 6)) == pytest.approx(0.5)
    f = ExistenceFactors(2.0, -1.0, 1, 1, 1, 1)
    assert (f.f_age, f.f_association) == (1.0, 0.0)


@given(st.lists(unit, min_size=6, max_size=6), st.integers(0, 5), unit)
def test_combine_bounded_and_monotone(fs, k, bump):
    base = combine(ExistenceFactors(*fs))
    assert 0.0 <= base <= 1.0
    raised = list(fs)
    raised[k] = max(raised[k], bump)
    assert combine(ExistenceFactors(*raised)) >= base - 1e-12


def test_steady_associated_track_scores_high():
    trk = make_track([entry(0.1 * k) for k in range(20)], age=20)
    f = compute_factors(trk, ExistenceConfig())
    assert f.f_association == 1.0
    for v in (f.f_aspect_ratio, f.f_volume, f.f_velocity, f.f_yaw_rate):
        assert v == pytest.approx(1.0, abs=1e-12)
    assert combine(f) > 0.95


def test_unassociated_track_loses_association_factor():
    entries = [entry(0.0)] + [entry(0.1 * k, associated=False) for k in range(1, 40)]
    f = compute_factors(make_track(entries), ExistenceConfig(window=20))
    assert f.f_association == 0.0


def test_fluctuating_shape_and_motion_penalised():
    rng = np.random.default_rng(0)
    entries = [
        entry(0.1 * k, dims=(rng.uniform(0.5, 4), rng.uniform(0.3, 2), 1.0), v=rng.normal(0, 3, 2), omega=rng.normal(0, 2))
        for k in range(20)
    ]
    f = compute_factors(make_track(entries), ExistenceConfig())
    assert f.f_aspect_ratio < 0.5
    assert f.f_velocity < 0.5
    assert f.f_yaw_rate < 0.5
    assert combine(f) < 0.5


def test_single_sample_window_defaults():
    f = compute_factors(make_track([entry(0.0)]), ExistenceConfig())
    assert f.f_age == pytest.approx(age_factor(1))
    assert (f.f_aspect_ratio, f.f_volume, f.f_velocity, f.f_yaw_rate) == (1.0, 1.0, 1.0, 1.0)


def test_config_validation():
    with pytest.raises(ModelError):
        ExistenceConfig(t_ar=0.0)
    with pytest.raises(ModelError):
        ExistenceConfig(weights=(0.5, 0.5, 0.5, 0, 0, 0))
    with pytest.raises(ModelError):
        ExistenceConfig(window=0)
