import csv
import json

import jsonschema
import pytest

from folnerlab import __version__, cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_systems(capsys):
    code, out, _ = run(["list-systems"], capsys)
    assert code == 0
    assert "rotation" in out and "bernoulli-shift:Z" in out
    assert len(out.strip().splitlines()) - 1 >= 7


def test_profile_rotation_report(tmp_path, capsys):
    path = tmp_path / "r.json"
    code, out, _ = run(["profile", "--system", "rotation", "--epsilon", "0.2", "--n-list", "8,16,32", "--sample-size", "500", "--seed", "1", "--output", str(path)], capsys)
    assert code == 0 and out.strip() == str(path)
    rep = json.loads(path.read_text())
    assert rep["version"] == __version__ and rep["command"] == "profile"
    assert rep["config"]["seed"] == 1 and rep["config"]["epsilon"] == [0.2]
    assert rep["result"]["profiles"][0]["verdict"] == "Bounded"
    jsonschema.validate(rep, cli.load_schema())


def test_reports_are_byte_identical(tmp_path, capsys):
    argv = ["maxmean", "--system", "odometer", "--epsilon", "0.2", "--budget", "10", "--sample-size", "500", "--seed", "9", "--output", str(tmp_path / "m.json")]
    run(argv, capsys)
    first = (tmp_path / "m.json").read_bytes()
    run(argv, capsys)
    assert (tmp_path / "m.json").read_bytes() == first


def test_unknown_system_exits_2(capsys):
    code, _, err = run(["profile", "--system", "cat-map", "--seed", "1"], capsys)
    assert code == 2 and "cat-map" in err


def test_unknown_family_exits_2(capsys):
    code, _, err = run(["profile", "--system", "rotation", "--family", "boxes", "--seed", "1"], capsys)
    assert code == 2 and "boxes" in err
    code, _, err = run(["tempered", "--group", "Z", "--family", "discs"], capsys)
    assert code == 2 and "discs" in err


def test_seed_required(capsys):
    code, _, err = run(["profile", "--system", "rotation"], capsys)
    assert code == 2 and "--seed" in err


@pytest.mark.parametrize("flag,value", [("--epsilon", "1.2"), ("--sample-size", "0"), ("--n-list", "0,4")])
def test_invalid_values_exit_2(flag, value, capsys):
    code, _, _ = run(["profile", "--system", "rotation", "--seed", "1", flag, value], capsys)
    assert code == 2


def test_sample_too_small_exits_2(capsys):
    code, _, err = run(["profile", "--system", "rotation", "--seed", "1", "--epsilon", "0.05", "--sample-size", "100"], capsys)
    assert code == 2 and "2000" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["profile", "--format", "xml"])
    assert exc.value.code == 2


@pytest.mark.parametrize("N,constant", [(10, 1.8), (2, 1.0)])
def test_tempered(N, constant, tmp_path, capsys):
    path = tmp_path / "t.json"
    code, _, _ = run(["tempered", "--group", "Z", "--family", "intervals", "--prefix", str(N), "--output", str(path)], capsys)
    assert code == 0
    assert json.loads(path.read_text())["result"]["constant"] == pytest.approx(constant)


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = cli.RunConfig(system="odometer", epsilon=[0.2], n_list=[4, 8, 16], sample_size=500, seed=2)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg.to_json()))
    out = tmp_path / "o.json"
    code, _, _ = run(["profile", "--config", str(cfg_path), "--seed", "5", "--output", str(out)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["system"] == "odometer" and rep["config"]["seed"] == 5


def test_config_rejects_unknown_keys(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"system": "rotation", "colour": "red"}))
    code, _, err = run(["profile", "--config", str(p), "--seed", "1"], capsys)
    assert code == 2 and "colour" in err


def test_run_config_round_trip():
    cfg = cli.RunConfig(system="bernoulli-shift:Z^2", family="boxes", epsilon=[0.3, 0.4], n_list=[1, 2], truncation=3, seed=7, format="csv")
    back = cli.RunConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back == cfg
    assert back.system_spec() == "bernoulli-shift:Z^2,L=3"
    assert cli.RunConfig(system="sturmian", truncation=4).system_spec() == "sturmian:L=4"


def test_csv_output_and_env_directory(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    code, out, _ = run(["profile", "--system", "rotation", "--epsilon", "0.2", "--n-list", "4,8", "--sample-size", "500", "--seed", "3", "--format", "csv"], capsys)
    assert code == 0
    path = out.strip()
    assert path.startswith(str(tmp_path)) and path.endswith(".csv")
    rows = list(csv.DictReader(open(path)))
    assert [r["n"] for r in rows] == ["4", "8"]


def test_truncation_flag_reaches_the_system(tmp_path, capsys):
    out = tmp_path / "b.json"
    code, _, _ = run(["profile", "--system", "bernoulli-shift:Z", "--truncation", "4", "--epsilon", "0.3", "--n-list", "1,2", "--sample-size", "400", "--seed", "1", "--output", str(out)], capsys)
    assert code == 0
    prof = json.loads(out.read_text())["result"]["profiles"][0]
    assert prof["system"] == "bernoulli-shift:Z,L=4"
    assert prof["truncationError"] == pytest.approx(2.0**-3 / (1 + 2 * (0.5 + 0.25 + 0.125 + 0.0625)))


def test_spectrum_command(tmp_path, capsys):
    out = tmp_path / "s.json"
    code, _, _ = run(["spectrum", "--system", "rotation", "--function", "chi(1)", "--epsilon", "0.3", "--n-list", "32,64,128", "--sample-size", "300", "--seed", "2", "--output", str(out)], capsys)
    assert code == 0
    nets = json.loads(out.read_text())["result"]["nets"]
    assert len(nets) == 1 and nets[0]["verdict"] == "Precompact"
    code, _, _ = run(["spectrum", "--system", "rotation", "--function", "nope", "--seed", "2"], capsys)
    assert code == 2


def test_equicont_on_bernoulli_records_failure(tmp_path, capsys):
    out = tmp_path / "e.json"
    code, _, _ = run(["equicont", "--system", "bernoulli-shift:Z", "--epsilon", "0.1", "--pairs", "100", "--n-max", "64", "--seed", "4", "--output", str(out)], capsys)
    assert code == 0
    reps = json.loads(out.read_text())["result"]["reports"]
    assert {r["mode"] for r in reps} == {"MeanLimsup", "InTheMean"}
    assert all(r["outcome"] == "fail" for r in reps)


def test_threads_flag(tmp_path, capsys):
    import numba

    try:
        code, _, _ = run(["profile", "--system", "rotation", "--epsilon", "0.3", "--n-list", "4,8", "--sample-size", "400", "--seed", "1", "--threads", "1", "--output", str(tmp_path / "t.json")], capsys)
        assert code == 0 and numba.get_num_threads() == 1
    finally:
        numba.set_num_threads(numba.config.NUMBA_NUM_THREADS)


def test_cross_validate_exit_codes(tmp_path, capsys):
    code, out, _ = run(["cross-validate", "--system", "rotation", "--seed", "0", "--output", str(tmp_path / "ok.json")], capsys)
    assert code == 0 and "Consistent" in out
    code, out, _ = run(["cross-validate", "--system", "rotation", "--ground-truth", "NotDiscreteSpectrum", "--seed", "0", "--output", str(tmp_path / "bad.json")], capsys)
    assert code == 1 and "Inconsistent" in out
    rep = json.loads((tmp_path / "bad.json").read_text())
    assert rep["result"]["status"] == "Inconsistent"
