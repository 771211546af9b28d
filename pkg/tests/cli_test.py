import logging

from utils import small_sections
from utils import write_config

from pinnobs.cli import EXIT_CONFIG
from pinnobs.cli import EXIT_IO
from pinnobs.cli import EXIT_NUMERICAL
from pinnobs.cli import EXIT_OK
from pinnobs.cli import build_parser
from pinnobs.cli import main
from pinnobs.cli import run_experiment


def test_parser_overrides():
    args = build_parser().parse_args(
        ["ablate", "grid.cfg", "--jobs", "3", "--seed", "5", "--max-iters", "10"]
    )
    assert (args.command, args.jobs, args.seed, args.max_iters) == ("ablate", 3, 5, 10)


def test_run(tmp_path):
    config = write_config(tmp_path / "duffing.cfg", small_sections(tmp_path / "ignored"))
    out = tmp_path / "run"
    assert main(["run", str(config), "--out", str(out), "--max-iters", "10"]) == EXIT_OK
    assert (out / "params.ckpt").is_file()
    assert "max_iters = 10" in (out / "manifest.txt").read_text()


def test_runs_are_reproducible(tmp_path):
    config = write_config(tmp_path / "duffing.cfg", small_sections(tmp_path / "ignored"))
    for name in ("first", "second"):
        assert main(["run", str(config), "--out", str(tmp_path / name), "--seed", "42"]) == 0
    for artifact in ("history.csv", "params.ckpt", "truth.csv", "metrics.txt"):
        first = (tmp_path / "first" / artifact).read_bytes()
        assert first == (tmp_path / "second" / artifact).read_bytes()


def test_invalid_learning_rate(tmp_path, caplog):
    config = write_config(tmp_path / "bad.cfg", small_sections(tmp_path / "run", lr=-1))
    with caplog.at_level(logging.ERROR):
        assert main(["run", str(config)]) == EXIT_CONFIG
    assert "lr" in caplog.text
    assert not (tmp_path / "run").exists()


def test_numerical_failure(tmp_path):
    sections = small_sections(tmp_path / "run")
    sections["simulation"]["x0"] = "1e60, 1e60"
    config = write_config(tmp_path / "escape.cfg", sections)
    assert run_experiment(config) == EXIT_NUMERICAL


def test_missing_config(tmp_path):
    assert run_experiment(tmp_path / "missing.cfg") == EXIT_IO


def test_replay(tmp_path):
    out = tmp_path / "run"
    config = write_config(tmp_path / "duffing.cfg", small_sections(out))
    assert main(["run", str(config)]) == EXIT_OK
    assert main(["replay", str(config), "--ckpt", str(out / "params.ckpt")]) == EXIT_OK
    assert main(["replay", str(config), "--ckpt", str(out / "truth.csv")]) == EXIT_CONFIG


def test_ablate(tmp_path):
    write_config(tmp_path / "base.cfg", small_sections(tmp_path / "ignored"))
    grid = write_config(
        tmp_path / "grid.cfg",
        {"ablation": {"base": "base.cfg", "axis": "activation", "activations": "tanh, sine"}},
    )
    out = tmp_path / "grid"
    assert main(["ablate", str(grid), "--out", str(out), "--max-iters", "5"]) == EXIT_OK
    lines = (out / "ablation.csv").read_text().splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == ["activation_tanh", "activation_sine"]


def test_metrics(tmp_path, capsys):
    out = tmp_path / "run"
    config = write_config(tmp_path / "duffing.cfg", small_sections(out))
    assert main(["run", str(config)]) == EXIT_OK
    capsys.readouterr()
    truth = str(out / "truth.csv")
    assert main(["metrics", truth, truth]) == EXIT_OK
    printed = capsys.readouterr().out.splitlines()
    assert "rmse=0" in printed
    assert "mae_x2=0" in printed


def test_oversized_grid_is_a_configuration_error(tmp_path, caplog):
    sections = small_sections(tmp_path / "run")
    sections["simulation"]["horizon"] = "1e9"
    config = write_config(tmp_path / "long.cfg", sections)
    with caplog.at_level(logging.ERROR):
        assert main(["run", str(config)]) == EXIT_CONFIG
    assert "grid points" in caplog.text
    assert not (tmp_path / "run").exists()


def test_history_reads_the_recorded_run(tmp_path, capsys):
    out = tmp_path / "run"
    url = f"sqlite:///{tmp_path / 'runs.db'}"
    sections = small_sections(out)
    sections["storage"] = {"database_url": url}
    config = write_config(tmp_path / "duffing.cfg", sections)
    assert main(["run", str(config)]) == EXIT_OK
    capsys.readouterr()

    assert main(["history", str(out), "--database", url]) == EXIT_OK
    printed = capsys.readouterr().out.splitlines()
    assert printed == (out / "history.csv").read_text().splitlines()
    assert main(["history", str(tmp_path / "elsewhere"), "--database", url]) == EXIT_CONFIG
