import json
import logging
from dataclasses import replace
from pathlib import Path

import pytest
import yaml
from filelock import FileLock

from kgalign.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_STAGE, main
from kgalign.evaluation import EvalReport
from kgalign.pipeline import (STAGES, ConfigError, PipelineConfig, StageError, config_from_flat, load_config,
                              planned_stages, run_pipeline, run_stage, write_config)
from kgalign.storage import load_matrix
from kgalign.structural import FULL_SCALE_TRAINING


@pytest.fixture
def bench(tmp_path):
    root = tmp_path / "bench"
    assert main(["gen-synthetic", "--output", str(root), "--entities", "60", "--seed", "1", "--quiet"]) == EXIT_OK
    cfg = yaml.safe_load((root / "config.yaml").read_text())
    cfg["training.epochs"] = 20
    (root / "config.yaml").write_text(yaml.safe_dump(cfg))
    return root


def _noisy(tmp_path, name="noisy"):
    root = tmp_path / name
    assert main(["gen-synthetic", "--output", str(root), "--entities", "60", "--seed", "2", "--name-noise", "2",
                 "--structure-noise", "0.2", "--quiet"]) == EXIT_OK
    cfg = yaml.safe_load((root / "config.yaml").read_text())
    cfg["training.epochs"] = 20
    (root / "config.yaml").write_text(yaml.safe_dump(cfg))
    return root


def test_gen_synthetic_files(bench):
    for name in ("kg1_triples.tsv", "kg2_triples.tsv", "links.tsv", "word_vectors.txt", "config.yaml"):
        assert (bench / name).is_file()
    cfg = load_config(bench / "config.yaml")
    assert cfg.kg1_triples == bench / "kg1_triples.tsv"
    assert cfg.output == bench / "output"


def test_run_zero_noise_is_exact(bench, capsys):
    assert main(["run", "--config", str(bench / "config.yaml")]) == EXIT_OK
    out = bench / "output"
    report = EvalReport.from_text((out / "eval_report.txt").read_text())
    assert report.accuracy == 1.0 and report.total == 42
    assert "accuracy=1.000000" in capsys.readouterr().out
    for stage in STAGES:
        if stage != "evaluate":
            for name in ("seed_links.tsv", "test_links.tsv", "fused.mat", "matching.tsv", "fusion_report.json"):
                assert (out / name).is_file()
    stages = json.loads((out / "fusion_report.json").read_text())["stages"]
    assert [s["name"] for s in stages] == ["textual", "final"]


def test_rerun_is_byte_identical(tmp_path):
    root = _noisy(tmp_path)
    cfg = str(root / "config.yaml")
    assert main(["run", "--config", cfg, "--quiet"]) == EXIT_OK
    first = {p.name: p.read_bytes() for p in (root / "output").iterdir() if p.is_file() and p.name != ".lock"}
    assert main(["run", "--config", cfg, "--quiet"]) == EXIT_OK
    second = {p.name: p.read_bytes() for p in (root / "output").iterdir() if p.is_file() and p.name != ".lock"}
    assert first == second


def test_staged_equals_monolithic(tmp_path):
    root = _noisy(tmp_path)
    cfg = str(root / "config.yaml")
    assert main(["run", "--config", cfg, "--output", str(tmp_path / "mono"), "--quiet"]) == EXIT_OK
    for stage in STAGES:
        assert main(["stage", stage, "--config", cfg, "--output", str(tmp_path / "staged"), "--quiet"]) == EXIT_OK
    mono = {p.name: p.read_bytes() for p in (tmp_path / "mono").iterdir() if p.name != ".lock"}
    staged = {p.name: p.read_bytes() for p in (tmp_path / "staged").iterdir() if p.name != ".lock"}
    assert mono == staged


def test_seed_flag_changes_split(tmp_path):
    root = _noisy(tmp_path)
    cfg = str(root / "config.yaml")
    main(["stage", "string-sim", "--config", cfg, "--output", str(tmp_path / "a"), "--quiet"])
    main(["stage", "string-sim", "--config", cfg, "--output", str(tmp_path / "b"), "--seed", "99", "--quiet"])
    assert (tmp_path / "a" / "seed_links.tsv").read_bytes() != (tmp_path / "b" / "seed_links.tsv").read_bytes()


def test_match_without_fused_matrix(bench, caplog):
    with caplog.at_level(logging.ERROR):
        code = main(["stage", "match", "--config", str(bench / "config.yaml")])
    assert code == EXIT_STAGE
    assert "fused.mat" in caplog.text and "fuse" in caplog.text


def test_fuse_after_feature_stages(bench):
    cfg = str(bench / "config.yaml")
    for stage in ("embed-structural", "embed-semantic", "string-sim", "fuse"):
        assert main(["stage", stage, "--config", cfg, "--quiet"]) == EXIT_OK
    fused = load_matrix(bench / "output" / "fused.mat")
    assert fused.shape == (42, 42)


def test_missing_word_vectors_names_path(bench, caplog):
    (bench / "word_vectors.txt").unlink()
    with caplog.at_level(logging.ERROR):
        code = main(["run", "--config", str(bench / "config.yaml")])
    assert code == EXIT_CONFIG
    assert str(bench / "word_vectors.txt") in caplog.text


def test_semantic_disabled_needs_no_vectors(bench):
    cfg = yaml.safe_load((bench / "config.yaml").read_text())
    cfg["switches.semantic"] = False
    cfg["paths.word_vectors"] = []
    (bench / "config.yaml").write_text(yaml.safe_dump(cfg))
    config = load_config(bench / "config.yaml")
    assert "embed-semantic" not in planned_stages(config)
    report = run_pipeline(config)
    assert report.accuracy == 1.0
    assert not (bench / "output" / "semantic.mat").exists()


def test_failure_marker_blocks_downstream(bench, caplog):
    cfg = str(bench / "config.yaml")
    assert main(["run", "--config", cfg, "--quiet"]) == EXIT_OK
    (bench / "output" / "structural.mat").write_bytes(b"garbage")
    assert main(["stage", "fuse", "--config", cfg, "--quiet"]) == EXIT_DATA
    assert (bench / "output" / "fuse.failed").is_file()
    with caplog.at_level(logging.ERROR):
        assert main(["stage", "match", "--config", cfg, "--quiet"]) == EXIT_STAGE
    assert "failed previously" in caplog.text
    assert main(["stage", "embed-structural", "--config", cfg, "--quiet"]) == EXIT_OK
    assert main(["stage", "fuse", "--config", cfg, "--quiet"]) == EXIT_OK
    assert not (bench / "output" / "fuse.failed").exists()
    assert main(["stage", "match", "--config", cfg, "--quiet"]) == EXIT_OK


def test_malformed_triples_is_data_error(bench, caplog):
    with open(bench / "kg1_triples.tsv", "a", encoding="utf-8") as fh:
        fh.write("only\ttwo\n")
    with caplog.at_level(logging.ERROR):
        assert main(["run", "--config", str(bench / "config.yaml")]) == EXIT_DATA
    assert "kg1_triples.tsv" in caplog.text
    assert (bench / "output" / "embed-structural.failed").is_file()


def test_link_to_unknown_entity(bench):
    with open(bench / "links.tsv", "a", encoding="utf-8") as fh:
        fh.write("http://nowhere/a\thttp://nowhere/b\n")
    with pytest.raises(StageError, match="does not occur"):
        run_pipeline(load_config(bench / "config.yaml"))


def test_lock_rejects_concurrent_run(bench):
    out = bench / "output"
    out.mkdir()
    with FileLock(str(out / ".lock")):
        assert main(["run", "--config", str(bench / "config.yaml"), "--quiet"]) == EXIT_STAGE
    assert main(["stage", "string-sim", "--config", str(bench / "config.yaml"), "--quiet"]) == EXIT_OK


def test_trace_file(bench):
    cfg = yaml.safe_load((bench / "config.yaml").read_text())
    cfg["match.trace"] = True
    (bench / "config.yaml").write_text(yaml.safe_dump(cfg))
    run_pipeline(load_config(bench / "config.yaml"))
    lines = (bench / "output" / "proposal_trace.log").read_text().splitlines()
    assert lines[0].startswith("round=1\tsource=")
    assert sum(line.endswith("held") for line in lines) >= 42


def test_ablate_command(bench):
    assert main(["ablate", "--config", str(bench / "config.yaml"), "--quiet"]) == EXIT_OK
    lines = (bench / "output" / "ablation.tsv").read_text().splitlines()
    assert len(lines) == 11
    assert lines[1].split("\t")[0] == "full"


def test_evaluate_command(bench, capsys):
    cfg = str(bench / "config.yaml")
    assert main(["run", "--config", cfg, "--quiet"]) == EXIT_OK
    capsys.readouterr()
    assert main(["evaluate", "--config", cfg]) == EXIT_OK
    assert "accuracy=1.000000" in capsys.readouterr().out


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig(tmp_path / "a.tsv", tmp_path / "b.tsv", tmp_path / "l.tsv", tmp_path / "out",
                         (tmp_path / "v1.txt", tmp_path / "v2.txt"), rng_seed=7, trace=True, hits_at=(1, 5))
    cfg = cfg.with_seed(7)
    write_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


def test_config_defaults_are_full_scale(tmp_path):
    cfg = config_from_flat({"paths.kg1_triples": "a", "paths.kg2_triples": "b", "paths.links": "l"}, tmp_path)
    assert replace(cfg.training, rng_seed=0) == FULL_SCALE_TRAINING
    assert (cfg.training.dim, cfg.training.margin, cfg.training.epochs, cfg.training.negatives) == (300, 3.0, 300, 5)
    assert (cfg.fusion.theta1, cfg.fusion.theta2, cfg.seed_fraction) == (0.98, 0.1, 0.3)
    assert cfg.output == tmp_path / "output"


@pytest.mark.parametrize("raw, msg", [
    ({"paths.kg1_triples": "a", "paths.kg2_triples": "b"}, "paths.links"),
    ({"paths.kg1_triples": "a", "paths.kg2_triples": "b", "paths.links": "l", "bogus": 1}, "bogus"),
    ({"paths.kg1_triples": "a", "paths.kg2_triples": "b", "paths.links": "l", "training.nope": 1}, "training.nope"),
    ({"paths.kg1_triples": "a", "paths.kg2_triples": "b", "paths.links": "l", "training.dim": 0}, "dim"),
])
def test_config_errors(tmp_path, raw, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_flat(raw, tmp_path)


def test_missing_config_flag():
    assert main(["run"]) == EXIT_CONFIG


def test_unknown_stage_rejected_by_parser():
    with pytest.raises(SystemExit):
        main(["stage", "bogus", "--config", "x"])


def test_run_stage_api_unknown_stage(bench):
    with pytest.raises(StageError):
        run_stage(load_config(bench / "config.yaml"), "bogus")
