"""Noiseless synthetic traces pushed back through ingest and compared with the schedule."""

from __future__ import annotations

from collections import defaultdict

from mobnet import synth
from mobnet.geodata import load_tracts
from mobnet.ingest import assign_geoids, detect_stops_frame, extract_trips_frame, parse_pings


def run(world, dates, seed, tmp_path, interval_s=300.0):
    """Returns ``(device_days, mismatches)`` where each mismatch describes one device-day."""
    profile = synth.ProviderProfile("T", 1.0, interval_s, 0.0, 0.0)
    index = load_tracts(world.geojson())
    device_days = 0
    mismatches = []
    for i, date in enumerate(dates):
        sched = synth.day_schedules(world, date, i)
        truth = synth.truth_trips(world, sched, date)
        path = tmp_path / f"{date}.csv"
        synth.write_pings(synth.emit_day(world, profile, date, i, seed, sched), path)
        pings, report = parse_pings(path)
        assert report.rejected == 0
        stops = assign_geoids(detect_stops_frame(pings), index)
        trips, _ = extract_trips_frame(stops)
        got = defaultdict(list)
        for r in trips.itertuples(index=False):
            got[r.device_id].append((r.o_geoid, r.d_geoid, r.duration_s))
        want = defaultdict(list)
        for r in truth.itertuples(index=False):
            want[r.device_id].append((r.o_geoid, r.d_geoid, r.arrive_t - r.depart_t))
        for k in range(world.n_devices):
            dev = world.device_id(k)
            device_days += 1
            g, w = got.get(dev, []), want.get(dev, [])
            ok = len(g) == len(w) and all(
                a[0] == b[0] and a[1] == b[1] and abs(a[2] - b[2]) <= interval_s
                for a, b in zip(g, w))
            if not ok:
                mismatches.append((date, dev, g, w))
    return device_days, mismatches
