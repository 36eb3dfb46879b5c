import json

from click.testing import CliRunner

from picbreeder.cli import main


def write_config(path, **kv):
    base = dict(sessions=6, parallel_agents=2, seed=3, width=16, height=16)
    base.update(kv)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))


def test_run_and_metrics_and_grids_and_sweep(tmp_path):
    runner = CliRunner()
    cfg = tmp_path / "exp.cfg"
    arch = tmp_path / "arch"
    write_config(cfg, out_dir=str(arch))

    result = runner.invoke(main, ["run", "--config", str(cfg)])
    assert result.exit_code == 0, result.output
    assert "archive size 6" in result.output

    result = runner.invoke(main, [
        "metrics", "--archive", str(arch), "--metric", "j1"])
    assert result.exit_code == 0, result.output

    out_csv = tmp_path / "recall.csv"
    result = runner.invoke(main, [
        "metrics", "--archive", str(arch), "--metric", "recall",
        "--step", "2", "--out", str(out_csv)])
    assert result.exit_code == 0, result.output
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "archive_size,value"
    assert len(lines) == 4  # sizes 2, 4, 6

    result = runner.invoke(main, [
        "metrics", "--archive", str(arch), "--metric", "semantic-coverage",
        "--k", "3"])
    assert result.exit_code == 0, result.output

    grid = tmp_path / "grid.png"
    result = runner.invoke(main, [
        "grids", "--archive", str(arch), "--kind", "publication-order",
        "--n", "4", "--out", str(grid)])
    assert result.exit_code == 0, result.output
    assert grid.exists()

    sweep_out = tmp_path / "sweep.json"
    result = runner.invoke(main, [
        "sweep", "--genome", str(arch / "genomes" / "0.cppn"),
        "--steps", "5", "--width", "8", "--height", "8",
        "--out", str(sweep_out)])
    assert result.exit_code == 0, result.output
    payload = json.loads(sweep_out.read_text())
    assert "ranking" in payload


def test_run_with_seed_override(tmp_path):
    runner = CliRunner()
    cfg = tmp_path / "exp.cfg"
    write_config(cfg, out_dir=str(tmp_path / "a"))
    a = runner.invoke(main, ["run", "--config", str(cfg), "--seed", "5"])
    write_config(cfg, out_dir=str(tmp_path / "b"))
    b = runner.invoke(main, ["run", "--config", str(cfg), "--seed", "5"])
    assert a.exit_code == 0 and b.exit_code == 0
    hash_a = [l for l in a.output.splitlines() if "hash" in l]
    hash_b = [l for l in b.output.splitlines() if "hash" in l]
    assert hash_a == hash_b


def test_ingest_cli(tmp_path):
    runner = CliRunner()
    src = tmp_path / "human"
    src.mkdir()
    with open(src / "lineages.jsonl", "w") as fh:
        fh.write(json.dumps({"id": 1, "order": 1}) + "\n")
        fh.write(json.dumps({"id": 2, "order": 2, "parent_id": 1}) + "\n")
    result = runner.invoke(main, [
        "ingest", "--in", str(src), "--out", str(tmp_path / "out")])
    assert result.exit_code == 0, result.output
    assert "ingested 2 entries" in result.output


def test_traits_requires_endpoint(tmp_path, monkeypatch):
    monkeypatch.delenv("PICBREEDER_CHAT_ENDPOINT", raising=False)
    runner = CliRunner()
    result = runner.invoke(main, ["traits", "--out", str(tmp_path / "t.txt")])
    assert result.exit_code != 0
    assert "PICBREEDER_CHAT_ENDPOINT" in result.output
