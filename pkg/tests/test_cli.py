import json

import pytest

from main import EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def quick_config(tmp_path):
    path = tmp_path / "quick.ini"
    path.write_text("[normalform]\nmax_period = 2\n", encoding="utf-8")
    return str(path)


def last_envelope(capsys):
    return json.loads(capsys.readouterr().out)


def test_verify_passes(output_dir, quick_config, capsys):
    code = main(["verify", "--map", "cat3", "--seed", "1", "--samples", "50", "--out", str(output_dir), "--config", quick_config])
    envelope = last_envelope(capsys)
    assert code == EXIT_OK
    assert envelope["success"] is True
    assert envelope["data"]["experiment_id"] == "verify-cat3-s1"
    assert (output_dir / "verify-cat3-s1" / "report.json").is_file()


def test_missing_seed_is_a_usage_error(output_dir, capsys):
    code = main(["verify", "--map", "cat3", "--out", str(output_dir)])
    envelope = last_envelope(capsys)
    assert code == EXIT_USAGE
    assert envelope["error"]["code"] == "CFG_002"
    assert envelope["error"]["field"] == "experiment.seed"


def test_unknown_map_is_a_usage_error(output_dir, capsys):
    assert main(["verify", "--map", "baker", "--seed", "1", "--out", str(output_dir)]) == EXIT_USAGE
    assert last_envelope(capsys)["error"]["field"] == "map.name"


def test_missing_config_file(output_dir, capsys):
    assert main(["verify", "--seed", "1", "--config", str(output_dir / "absent.ini")]) == EXIT_USAGE
    assert last_envelope(capsys)["error"]["code"] == "CFG_004"


def test_unknown_verb_exits_through_argparse():
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 2


def test_runs_lists_stored_runs(output_dir, quick_config, capsys, monkeypatch):
    main(["verify", "--seed", "3", "--samples", "20", "--out", str(output_dir), "--config", quick_config])
    capsys.readouterr()
    monkeypatch.setenv("PHLAB_OUTPUT_DIR", str(output_dir))
    assert main(["runs"]) == EXIT_OK
    envelope = last_envelope(capsys)
    assert [r["experiment_id"] for r in envelope["data"]] == ["verify-cat3-s3"]
    assert envelope["data"][0]["passed"] is True


def test_csv_flag(output_dir, quick_config, capsys):
    main(["verify", "--seed", "1", "--samples", "20", "--format", "csv", "--out", str(output_dir), "--config", quick_config])
    assert last_envelope(capsys)["data"]["report"].endswith("checks.csv")
