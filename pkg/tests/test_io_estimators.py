import numpy as np
import pandas as pd
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from mobnet import io, synth
from mobnet.estimators import (MacroMetrics, MotifProfiler, NetworkBuilder, SourceComparator,
                               StopDetector, TractMetrics, TripExtractor)
from mobnet.geodata import load_tracts

from conftest import make_net


def test_trip_round_trip_preserves_floats_and_missing(tmp_path):
    trips = pd.DataFrame({
        "date": ["2020-02-01"] * 2, "device_id": ["d1", "d2"], "o_geoid": ["0100", None],
        "d_geoid": ["0200", "0300"], "o_lat": [0.1 + 0.2, 42.0], "o_lon": [-83.0, -83.1],
        "d_lat": [1 / 3, 42.5], "d_lon": [-83.2, -83.3], "depart_t": [1.0, 2.0],
        "arrive_t": [3.0, 4.0], "distance_m": [np.pi, 1e-7], "duration_s": [2.0, 2.0]})
    io.write_trips(trips, tmp_path / "t.csv")
    back = io.read_trips(tmp_path / "t.csv")
    assert back.o_geoid.tolist() == ["0100", None]
    assert back.o_lat[0] == 0.1 + 0.2 and back.distance_m[0] == np.pi
    assert (tmp_path / "t.csv").read_bytes().count(b"\r") == 0


def test_series_missing_values(tmp_path):
    io.write_series(["a", "b", "c"], [1.5, None, float("nan")], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == "date,value\na,1.5\nb,NA\nc,NA\n"
    back = io.read_series(tmp_path / "s.csv")
    assert back.value[0] == 1.5 and np.isnan(back.value[1])


def test_manifest_digests(tmp_path):
    (tmp_path / "x").mkdir()
    (tmp_path / "x" / "a.csv").write_text("1\n")
    io.write_manifest(tmp_path, {"k": 1})
    doc = pd.read_json(tmp_path / "manifest.json", typ="series")
    assert list(doc["files"]) == ["x/a.csv"]
    assert doc["files"]["x/a.csv"] == io.sha256_file(tmp_path / "x" / "a.csv")


@pytest.fixture(scope="module")
def world_day():
    w = synth.generate_world(4, 120, seed=2)
    p = synth.ProviderProfile("T", 1.0, 300.0)
    pings = synth.emit_day(w, p, "2020-02-03", 0, 1)
    return w, load_tracts(w.geojson()), pings


def test_pipeline_composition(world_day):
    w, index, pings = world_day
    pipe = make_pipeline(StopDetector(), TripExtractor(index), NetworkBuilder(index, "99001"),
                         MacroMetrics())
    out = pipe.fit_transform(pings)
    assert list(out.date) == ["2020-02-03"]
    assert out.avg_degree[0] > 0


def test_get_params_and_clone(world_day):
    est = MotifProfiler(mode="sample", n_samples=500, random_state=3)
    params = est.get_params()
    assert params["n_samples"] == 500 and params["random_state"] == 3
    assert clone(est).get_params() == params
    est.set_params(mode="exact")
    assert est.mode == "exact"


def test_not_fitted_raises(world_day):
    with pytest.raises(NotFittedError):
        StopDetector().transform(world_day[2])


def test_input_validation():
    with pytest.raises(ValueError, match="missing columns"):
        StopDetector().fit(pd.DataFrame({"device_id": ["a"]}))
    with pytest.raises(ValueError, match="out of range"):
        StopDetector().fit(pd.DataFrame({"device_id": ["a"], "t": [0.0], "lat": [99.0], "lon": [0.0]}))
    with pytest.raises(ValueError):
        StopDetector(radius_m=-1).fit(pd.DataFrame({"device_id": ["a"], "t": [0.0], "lat": [0.0],
                                                    "lon": [0.0]}))
    with pytest.raises(TypeError):
        MacroMetrics().fit(["not a network"])
    with pytest.raises(ValueError):
        MotifProfiler(mode="fast").fit([])


def test_motif_profiler_matches_census():
    k4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    coords = [(42.0, -83.0), (42.01, -83.0), (42.0, -83.01), (42.01, -83.01)]
    nets = [make_net(4, k4, coords, date=f"2020-02-0{i}") for i in range(1, 4)]
    frame = MotifProfiler().fit_transform(nets)
    assert len(frame) == 21
    assert frame[frame.type == 1].share.tolist() == [1.0, 1.0, 1.0]
    assert frame[frame.type == 1].share_ma7.tolist() == [1.0, 1.0, 1.0]
    small = MotifProfiler().fit_transform([make_net(3, [(0, 1)])])
    assert small["count"].isna().all()


def test_tract_metrics_stage(world_day):
    _, index, pings = world_day
    stops = StopDetector().fit_transform(pings)
    trips = TripExtractor(index).fit_transform(stops)
    stops = stops.assign(date="2020-02-03")
    table = TractMetrics().fit_transform((trips, stops))
    assert (table.avg_trip_count >= 1).all()


def test_source_comparator():
    comp = SourceComparator().fit({"S": [1.0, 2.0], "X": [4.0, 0.0], "V": [1.0, 2.0]})
    assert comp.predict() == "SV"
    assert comp.scores_["SV"] == 0.0
    assert comp.predict({"S": [0.0], "X": [1.0], "V": [3.0]}) == "SX"
    with pytest.raises(NotFittedError):
        SourceComparator().predict()
