import io
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvelatent.curves import CurveKind, RawStepCurve, check_monotone
from curvelatent.errors import (
    DuplicateVolume,
    MalformedLine,
    MissingPair,
    NoIntersection,
    NonMonotoneCurve,
)
from curvelatent.ingestion import (
    SyntheticConfig,
    clearing_point,
    generate_synthetic,
    parse_curve_file,
    serialize_dataset,
)

from conftest import T0

GOOD = b"""# sample
2019-06-01;14;S;10.0;100.0
2019-06-01;14;S;20.0;250.0
2019-06-01;14;D;30.0;120.0
2019-06-01;14;D;5.0;300.0
"""


def curve(kind, steps):
    prices, volumes = zip(*steps)
    return RawStepCurve(T0, kind, prices, volumes)


def brute_force_clearing(supply, demand, n=200001):
    top = min(supply.max_volume, demand.max_volume)
    q = np.linspace(0.0, top, n)
    ok = supply.sample(q) <= demand.sample(q)
    return q[ok].max()


def test_parse_one_hour():
    ds = parse_curve_file(GOOD)
    assert len(ds) == 1
    ts = datetime(2019, 6, 1, 14)
    assert ds.curve(ts, CurveKind.SUPPLY).steps == [(10.0, 100.0), (20.0, 250.0)]
    assert ds.clearing[ts] == (20.0, 120.0)


def test_parse_accepts_stream_and_sorts_steps():
    shuffled = b"2019-06-01;14;S;20.0;250.0\n2019-06-01;14;S;10.0;100.0\n" \
               b"2019-06-01;14;D;5.0;300.0\n2019-06-01;14;D;30.0;120.0\n"
    ds = parse_curve_file(io.BytesIO(shuffled))
    assert ds.curves == parse_curve_file(GOOD).curves


@pytest.mark.parametrize(
    "line, line_no",
    [
        (b"2019-06-01;14;X;10;100\n", 1),
        (b"# c\n2019-06-01;14;S;10\n", 2),
        (b"2019-06-01;14;S;ten;100\n", 1),
        (b"2019-13-01;14;S;10;100\n", 1),
        (b"2019-06-01;24;S;10;100\n", 1),
        (b"2019-06-01;14;S;nan;100\n", 1),
    ],
)
def test_malformed_lines(line, line_no):
    with pytest.raises(MalformedLine) as err:
        parse_curve_file(line)
    assert err.value.line_no == line_no


def test_non_monotone_supply():
    text = b"2019-06-01;14;S;20;100\n2019-06-01;14;S;10;250\n2019-06-01;14;D;30;300\n"
    with pytest.raises(NonMonotoneCurve) as err:
        parse_curve_file(text)
    assert err.value.kind is CurveKind.SUPPLY


def test_duplicate_volume_and_missing_pair():
    with pytest.raises(DuplicateVolume):
        parse_curve_file(b"2019-06-01;14;S;10;100\n2019-06-01;14;S;20;100\n2019-06-01;14;D;3;1\n")
    with pytest.raises(MissingPair):
        parse_curve_file(b"2019-06-01;14;S;10;100\n")


def test_non_intersecting_hour_is_dropped(caplog):
    text = GOOD + b"2019-06-01;15;S;30;100\n2019-06-01;15;D;20;100\n"
    ds = parse_curve_file(text)
    assert len(ds) == 1
    assert "do not intersect" in caplog.text


def test_clearing_examples():
    supply = curve(CurveKind.SUPPLY, [(10, 100)])
    demand = curve(CurveKind.DEMAND, [(20, 50), (5, 100)])
    assert clearing_point(supply, demand) == (10, 50)
    assert brute_force_clearing(supply, demand) == pytest.approx(50, abs=1e-3)
    flat_d = curve(CurveKind.DEMAND, [(10, 100)])
    assert clearing_point(supply, flat_d) == (10, 100)
    with pytest.raises(NoIntersection):
        clearing_point(curve(CurveKind.SUPPLY, [(30, 100)]), curve(CurveKind.DEMAND, [(20, 100)]))


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_clearing_matches_brute_force_scan(seed):
    rng = np.random.default_rng(seed)
    n_s, n_d = rng.integers(1, 6, size=2)
    sv = np.cumsum(rng.integers(1, 20, size=n_s)).astype(float)
    dv = np.cumsum(rng.integers(1, 20, size=n_d)).astype(float)
    supply = RawStepCurve(T0, CurveKind.SUPPLY, np.sort(rng.integers(0, 10, n_s)), sv)
    demand = RawStepCurve(T0, CurveKind.DEMAND, np.sort(rng.integers(5, 15, n_d))[::-1], dv)
    if supply.prices[0] > demand.prices[0]:
        with pytest.raises(NoIntersection):
            clearing_point(supply, demand)
        return
    price, volume = clearing_point(supply, demand)
    top = min(supply.max_volume, demand.max_volume)
    # integer breakpoints: a scan at step 1/64 hits every one exactly
    assert volume == pytest.approx(brute_force_clearing(supply, demand, int(top * 64) + 1))
    assert price == supply.sample(volume)
    assert supply.sample(volume) <= demand.sample(volume)
    if volume < top:
        assert supply.sample(volume + 1e-6) > demand.sample(volume + 1e-6)


def test_round_trip(small_dataset):
    again = parse_curve_file(serialize_dataset(small_dataset))
    assert again.curves == small_dataset.curves
    assert again.clearing == small_dataset.clearing


def test_synthetic_is_deterministic():
    cfg = SyntheticConfig(seed=3, n_days=3)
    assert serialize_dataset(generate_synthetic(cfg)) == serialize_dataset(generate_synthetic(cfg))


def test_noise_free_synthetic_is_periodic():
    ds = generate_synthetic(SyntheticConfig(seed=5, n_days=4, noise_scale=0.0))
    volumes = ds.clearing_volumes().reshape(4, 24)
    assert np.array_equal(volumes, np.tile(volumes[0], (4, 1)))


def test_synthetic_thirty_days_valid():
    ds = generate_synthetic(SyntheticConfig(seed=1, n_days=30))
    assert len(ds) == 720
    for ts in ds.timestamps:
        for kind in CurveKind:
            c = ds.curve(ts, kind)
            assert check_monotone(c.prices, kind.direction, eps=0.0)
        price, volume = ds.clearing[ts]
        assert 0 <= volume <= min(ds.curve(ts, k).max_volume for k in CurveKind)


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(n_days=0)
    with pytest.raises(ValueError):
        SyntheticConfig(n_steps_range=(1, 5))
    with pytest.raises(ValueError):
        SyntheticConfig(noise_scale=-1)
