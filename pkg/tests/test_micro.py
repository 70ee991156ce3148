import math

import numpy as np
import pandas as pd
import pytest

from mobnet.micro import (TractAccumulator, micro_metrics, radius_of_gyration, rank_tracts,
                          tract_day_metrics)

import oracles

A, B, C = "99001000001", "99001000002", "99001000003"


def trip_frame(rows):
    return pd.DataFrame(rows, columns=["date", "device_id", "o_geoid", "d_geoid", "distance_m",
                                       "duration_s"])


def stop_frame(rows):
    return pd.DataFrame(rows, columns=["date", "device_id", "lat", "lon"])


NO_STOPS = stop_frame([])


def test_one_device_two_trips():
    trips = trip_frame([("d", "x", A, B, 1000.0, 100.0), ("d", "x", B, A, 3000.0, 300.0)])
    m = tract_day_metrics(trips, NO_STOPS, A, "d")
    assert m.avg_trip_count == 2.0 and m.avg_distance_m == 2000.0


def test_travel_time_is_trip_duration():
    trips = trip_frame([("d", "x", A, B, 10.0, 1600.0 - 1000.0)])
    assert tract_day_metrics(trips, NO_STOPS, A, "d").avg_travel_time_s == 600.0


def test_two_devices_one_trip_each():
    trips = trip_frame([("d", "x", A, B, 10.0, 1.0), ("d", "y", C, A, 10.0, 1.0)])
    m = tract_day_metrics(trips, NO_STOPS, A, "d")
    assert m.avg_trip_count == 1.0 and m.device_count == 2


def test_untouched_tract_has_no_record():
    trips = trip_frame([("d", "x", A, B, 10.0, 1.0)])
    assert tract_day_metrics(trips, NO_STOPS, C, "d") is None


def test_vectorized_matches_per_tract():
    rng = np.random.default_rng(4)
    tracts = [A, B, C, "99001000004"]
    rows = [("d", f"dev{rng.integers(0, 8)}", tracts[rng.integers(0, 4)], tracts[rng.integers(0, 4)],
             float(rng.uniform(100, 5000)), float(rng.uniform(60, 3600))) for _ in range(60)]
    trips = trip_frame(rows)
    stops = stop_frame([("d", f"dev{k}", 42.3 + rng.uniform(0, 0.05), -83.3 + rng.uniform(0, 0.05))
                        for k in range(8) for _ in range(3)])
    table = micro_metrics(trips, stops, "d").set_index("geoid")
    for g in tracts:
        ref = tract_day_metrics(trips, stops, g, "d")
        if ref is None:
            assert g not in table.index
            continue
        row = table.loc[g]
        assert row.avg_trip_count == pytest.approx(ref.avg_trip_count)
        assert row.avg_distance_m == pytest.approx(ref.avg_distance_m)
        assert row.avg_travel_time_s == pytest.approx(ref.avg_travel_time_s)
        assert row.avg_rog_m == pytest.approx(ref.avg_radius_of_gyration_m)
        assert row.avg_trip_count >= 1


def test_accumulators_merge_like_a_single_pass():
    a = TractAccumulator().add_device("x", [100.0, 300.0], [10.0, 30.0], 5.0)
    b = TractAccumulator().add_device("y", [200.0], [20.0], 7.0)
    merged = a.merge(b).finalize(A, "d")
    whole = (TractAccumulator().add_device("x", [100.0, 300.0], [10.0, 30.0], 5.0)
             .add_device("y", [200.0], [20.0], 7.0).finalize(A, "d"))
    assert merged == whole
    with pytest.raises(ValueError):
        a.merge(a)


def test_rog_examples():
    assert radius_of_gyration([42.0], [-83.0]) == 0.0
    half = 500.0 / (oracles.EARTH_R * math.pi / 180)
    assert radius_of_gyration([0.0, 0.0], [-half, half]) == pytest.approx(500.0, abs=0.1)
    # square of side 200 m around the equator
    h = 100.0 / (oracles.EARTH_R * math.pi / 180)
    r = radius_of_gyration([-h, -h, h, h], [-h, h, -h, h])
    assert r == pytest.approx(200.0 / math.sqrt(2), rel=1e-3)


def test_rog_properties():
    rng = np.random.default_rng(0)
    lat = 42.3 + rng.uniform(0, 0.02, 10)
    lon = -83.3 + rng.uniform(0, 0.02, 10)
    base = radius_of_gyration(lat, lon)
    perm = rng.permutation(10)
    assert radius_of_gyration(lat[perm], lon[perm]) == pytest.approx(base, rel=1e-12)
    far = radius_of_gyration(np.append(lat, 42.5), np.append(lon, -83.0))
    assert far >= base


def test_rank_examples():
    np.testing.assert_array_equal(rank_tracts({"A": 5, "B": 3, "C": 1}), [1, 2, 3])
    np.testing.assert_array_equal(rank_tracts({"A": 5, "B": 5, "C": 1}), [1.5, 1.5, 3])
    np.testing.assert_array_equal(rank_tracts({"A": 2.0}), [1])


def test_rank_pads_missing_tracts():
    r = rank_tracts({"A": 5, "C": 1}, geoids=["A", "B", "C", "D"])
    np.testing.assert_array_equal(r, [1, 3, 2, 3])
