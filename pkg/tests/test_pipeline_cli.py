import json

import pandas as pd
import pytest
import yaml

from mobnet import cli, pipeline
from mobnet.config import ConfigError, load_config, parse_config

DAYS = 3


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundle")
    assert cli.main(["synth", "--out", str(root), "--side", "4", "--devices", "150",
                     "--days", str(DAYS), "--start", "2020-02-03"]) == 0
    return root


@pytest.fixture(scope="module")
def finished(bundle):
    assert cli.main(["run", str(bundle / "config.yaml"), "--threads", "1"]) == 0
    return bundle / "out"


def bundle_doc(bundle):
    """The bundle's config with absolute tract paths, safe to write elsewhere."""
    doc = yaml.safe_load((bundle / "config.yaml").read_text())
    for c in doc["counties"].values():
        c["tracts"] = str(bundle / c["tracts"])
    return doc


def all_files(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_trip_store_shape(finished):
    for county in ("99001", "99003"):
        for src in "SXV":
            assert len(list((finished / "trips" / src / county).glob("*.csv"))) == DAYS


def test_macro_series_shape(finished):
    for metric in ("avg_degree", "assortativity", "modularity"):
        frame = pd.read_csv(finished / "macro" / "S" / "99001" / f"{metric}.csv")
        assert len(frame) == DAYS


def test_manifest_lists_every_file(finished):
    manifest = json.loads((finished / "manifest.json").read_text())
    files = {p for p in all_files(finished) if p != "manifest.json"}
    assert set(manifest["files"]) == files
    assert manifest["config"]["counties"][0]["fips"] == "99001"


def test_verdict_table_shape(finished):
    table = pd.read_csv(finished / "compare" / "macro_verdicts.csv", dtype=str, keep_default_na=False)
    assert len(table) == 4 * 2
    assert set(table.metric) == {"avg_degree", "avg_clustering", "avg_shortest_path", "assortativity"}
    assert set(table.pair) <= {"SV", "XV", "SX", "n/a"}
    for name in ("motif_verdicts.csv", "micro_verdicts.csv", "network_size.csv"):
        assert (finished / "compare" / name).exists()
    assert (finished / "report.md").read_text().strip()


def test_rerun_is_byte_identical(bundle, finished, tmp_path):
    before = all_files(finished)
    other = tmp_path / "again"
    assert cli.main(["run", str(bundle / "config.yaml"), "--threads", "4",
                     "--output-dir", str(other)]) == 0
    after = all_files(other)
    assert before.keys() == after.keys()
    diff = [k for k in before if before[k] != after[k] and k != "manifest.json"]
    assert diff == []


def test_duplicated_source_wins_every_verdict(bundle, tmp_path):
    doc = bundle_doc(bundle)
    for c in doc["counties"].values():
        c["pings"] = {"S": str(bundle / "S"), "X": str(bundle / "X"), "V": str(bundle / "S")}
    doc["output_dir"] = str(tmp_path / "dup")
    cfg = parse_config(doc, bundle)
    pipeline.run_all(cfg)
    table = pd.read_csv(tmp_path / "dup" / "compare" / "macro_verdicts.csv", dtype={"fips": str})
    assert (table.pair == "SV").all()
    assert (table.score_SV.astype(float) == 0.0).all()
    micro = pd.read_csv(tmp_path / "dup" / "compare" / "micro_verdicts.csv")
    assert (micro.pair == "SV").all()


def test_two_sources_give_na(bundle, tmp_path):
    doc = bundle_doc(bundle)
    for c in doc["counties"].values():
        c["pings"] = {"S": str(bundle / "S"), "V": str(bundle / "V")}
    doc["output_dir"] = str(tmp_path / "two")
    pipeline.run_all(parse_config(doc, bundle))
    table = pd.read_csv(tmp_path / "two" / "compare" / "macro_verdicts.csv", keep_default_na=False)
    assert (table.pair == "n/a").all()


def test_motif_sampling_is_seeded(bundle, tmp_path):
    doc = bundle_doc(bundle)
    doc["motifs"] = {"mode": "sample", "n_samples": 100000, "seed": 7}
    outs = []
    for name in ("m1", "m2"):
        doc["output_dir"] = str(tmp_path / name)
        cfg = parse_config(doc, bundle)
        pipeline.cmd_ingest(cfg)
        pipeline.cmd_build_network(cfg)
        pipeline.cmd_analyze(cfg, "motif")
        outs.append(all_files(tmp_path / name / "motifs"))
    assert outs[0] == outs[1]


def test_missing_geojson_names_county(bundle, tmp_path):
    doc = bundle_doc(bundle)
    doc["counties"]["99003"]["tracts"] = str(tmp_path / "nope.geojson")
    doc["output_dir"] = str(tmp_path / "o")
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(yaml.safe_dump(doc))
    with pytest.raises(pipeline.DataError, match="99003"):
        pipeline.cmd_ingest(load_config(cfg_path))
    assert cli.main(["ingest", str(cfg_path)]) == 2


def test_config_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("counties: {}\ndates: [2020-02-01]\n")
    assert cli.main(["ingest", str(bad)]) == 1
    assert cli.main(["ingest", str(tmp_path / "missing.yaml")]) == 1
    bad.write_text("counties: {'1': {tracts: a, pings: {S: s}}}\ndates: [2020-02-01]\nbogus: 1\n")
    assert cli.main(["ingest", str(bad)]) == 1


def test_unknown_section_key_rejected():
    with pytest.raises(ConfigError, match="motifs.colour"):
        parse_config({"counties": {"1": {"tracts": "a", "pings": {"S": "s"}}},
                      "dates": ["2020-02-01"], "motifs": {"colour": 1}})


def test_defaults_and_date_ranges():
    cfg = parse_config({"counties": {"1": {"tracts": "a", "pings": {"S": "s"}}},
                        "dates": {"start": "2020-02-01", "end": "2020-02-29"}})
    assert len(cfg.dates) == 29 and cfg.dates[-1] == "2020-02-29"
    assert cfg.stops["radius_m"] == 100.0 and cfg.motifs["mode"] == "exact"


def test_output_env_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("MOBNET_OUTPUT_DIR", str(tmp_path / "env"))
    cfg = parse_config({"counties": {"1": {"tracts": "a", "pings": {"S": "s"}}},
                        "dates": ["2020-02-01"], "output_dir": "elsewhere"})
    assert cfg.output_dir == tmp_path / "env"


def test_compare_needs_two_sources(bundle, tmp_path):
    doc = bundle_doc(bundle)
    for c in doc["counties"].values():
        c["pings"] = {"S": str(bundle / "S")}
    doc["output_dir"] = str(tmp_path / "one")
    cfg_path = tmp_path / "one.yaml"
    cfg_path.write_text(yaml.safe_dump(doc))
    assert cli.main(["ingest", str(cfg_path)]) == 0
    assert cli.main(["compare", str(cfg_path)]) == 1


def test_tiny_penetration_runs_clean(tmp_path):
    out = tmp_path / "tiny"
    assert cli.main(["synth", "--out", str(out), "--side", "3", "--devices", "10", "--days", "2",
                     "--counties", "1", "--profile", "S:0.0001:300:0:0",
                     "--profile", "X:0.0001:300:0:0", "--profile", "V:0.0001:300:0:0"]) == 0
    assert cli.main(["ingest", str(out / "config.yaml")]) == 0
    assert cli.main(["build-network", str(out / "config.yaml")]) == 0
    for scale in ("macro", "motif", "micro"):
        assert cli.main(["analyze", str(out / "config.yaml"), "--scale", scale]) == 0
    nets = (out / "out" / "networks" / "S" / "99001.csv").read_text().splitlines()
    assert nets == ["date,origin_geoid,dest_geoid,weight"]


def test_cli_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    for cmd in ("ingest", "build-network", "analyze", "compare", "report", "run", "synth"):
        assert cmd in text
