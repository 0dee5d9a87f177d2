"""File-backed alignment pipeline.

Every stage reads its inputs from the output directory and writes its
artifacts there, so ``run`` is just every stage in order. A stage that fails
leaves a ``<stage>.failed`` marker; downstream stages refuse to consume
artifacts while an upstream marker exists.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml
from filelock import FileLock, Timeout

from . import fusion as ff
from .align import AlignmentTask, Switches, match_fused, structural_features
from .evaluation import EvalReport, evaluate
from .fusion import FusionConfig, fuse_enabled
from .kg import parse_links, parse_triples, split_alignment, write_links
from .semantic import load_word_embeddings, merge_stores, semantic_similarity_matrix
from .storage import load_matrix, save_embeddings, save_matrix
from .strings import StringSimConfig, string_similarity_matrix
from .structural import FULL_SCALE_TRAINING, TrainingConfig
from .matching import deferred_acceptance, format_trace, preference_lists

log = logging.getLogger(__name__)

STAGES = ("embed-structural", "embed-semantic", "string-sim", "fuse", "match", "evaluate")

FEATURE_STAGE = {ff.STRUCTURAL: "embed-structural", ff.SEMANTIC: "embed-semantic", ff.STRING: "string-sim"}

ARTIFACTS = {
    "split": ("seed_links.tsv", "test_links.tsv"),
    "embed-structural": ("embeddings_kg1.bin", "embeddings_kg2.bin", "structural.mat"),
    "embed-semantic": ("semantic.mat",),
    "string-sim": ("string.mat",),
    "fuse": ("fused.mat", "fusion_report.json"),
    "match": ("matching.tsv",),
    "evaluate": ("eval_report.txt",),
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A stage could not run or failed; carries the stage name."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


@dataclass
class PipelineConfig:
    kg1_triples: Path
    kg2_triples: Path
    links: Path
    output: Path
    word_vectors: tuple[Path, ...] = ()
    training: TrainingConfig = FULL_SCALE_TRAINING
    fusion: FusionConfig = field(default_factory=FusionConfig)
    string: StringSimConfig = field(default_factory=StringSimConfig)
    switches: Switches = field(default_factory=Switches)
    seed_fraction: float = 0.3
    rng_seed: int = 0
    hits_at: tuple[int, ...] = (1, 10)
    trace: bool = False

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, rng_seed=seed, training=replace(self.training, rng_seed=seed))

    def validate(self) -> None:
        for label, p in (("paths.kg1_triples", self.kg1_triples), ("paths.kg2_triples", self.kg2_triples),
                         ("paths.links", self.links)):
            if not p.is_file():
                raise ConfigError(f"{label}: file not found: {p}")
        if self.switches.semantic:
            if not self.word_vectors:
                raise ConfigError("paths.word_vectors is required when the semantic feature is enabled")
            for p in self.word_vectors:
                if not p.is_file():
                    raise ConfigError(f"paths.word_vectors: file not found: {p}")
        if not 0.0 < self.seed_fraction < 1.0:
            raise ConfigError("split.seed_fraction must lie in (0, 1)")

    def to_flat(self) -> dict:
        """Flat dotted-key mapping, the inverse of ``load_config``."""
        flat = {
            "paths.kg1_triples": str(self.kg1_triples),
            "paths.kg2_triples": str(self.kg2_triples),
            "paths.links": str(self.links),
            "paths.word_vectors": [str(p) for p in self.word_vectors],
            "paths.output": str(self.output),
            "rng_seed": self.rng_seed,
            "split.seed_fraction": self.seed_fraction,
            "eval.hits_at": list(self.hits_at),
            "match.trace": self.trace,
        }
        for section, obj in (("training", self.training), ("fusion", self.fusion),
                             ("string", self.string), ("switches", self.switches)):
            for f in fields(obj):
                if section == "training" and f.name == "rng_seed":
                    continue
                flat[f"{section}.{f.name}"] = getattr(obj, f.name)
        return flat


def _section(cls, raw: dict, prefix: str, base=None, **extra):
    names = {f.name for f in fields(cls)}
    kw = {}
    for key, value in raw.items():
        if key.startswith(prefix + "."):
            name = key[len(prefix) + 1:]
            if name not in names:
                raise ConfigError(f"unknown config key {key!r}")
            kw[name] = value
    kw.update(extra)
    try:
        return replace(base, **kw) if base is not None else cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix}: {exc}") from None


_TOP_LEVEL = {"paths.kg1_triples", "paths.kg2_triples", "paths.links", "paths.word_vectors", "paths.output",
              "rng_seed", "split.seed_fraction", "eval.hits_at", "match.trace"}
_SECTIONS = ("training", "fusion", "string", "switches")


def config_from_flat(raw: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    for key in raw:
        if key not in _TOP_LEVEL and key.split(".", 1)[0] not in _SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")

    def path(key, required=True):
        value = raw.get(key)
        if value is None:
            if required:
                raise ConfigError(f"missing required key {key!r}")
            return None
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    vectors = raw.get("paths.word_vectors") or []
    if isinstance(vectors, str):
        vectors = [vectors]
    seed = int(raw.get("rng_seed", 0))
    return PipelineConfig(
        kg1_triples=path("paths.kg1_triples"),
        kg2_triples=path("paths.kg2_triples"),
        links=path("paths.links"),
        output=path("paths.output", required=False) or base_dir / "output",
        word_vectors=tuple(p if p.is_absolute() else base_dir / p for p in map(Path, vectors)),
        training=_section(TrainingConfig, raw, "training", FULL_SCALE_TRAINING, rng_seed=seed),
        fusion=_section(FusionConfig, raw, "fusion"),
        string=_section(StringSimConfig, raw, "string"),
        switches=_section(Switches, raw, "switches"),
        seed_fraction=float(raw.get("split.seed_fraction", 0.3)),
        rng_seed=seed,
        hits_at=tuple(int(k) for k in raw.get("eval.hits_at", (1, 10))),
        trace=bool(raw.get("match.trace", False)),
    )


def load_config(path) -> PipelineConfig:
    """Read a flat YAML mapping with dotted keys (``training.dim: 300``)."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping of dotted keys")
    return config_from_flat(raw, path.parent)


def write_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_flat(), sort_keys=False), encoding="utf-8")


class Workspace:
    """Inputs and artifacts of one pipeline configuration."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.output)
        self._task = None

    def artifact(self, name) -> Path:
        return self.out / name

    def marker(self, stage) -> Path:
        return self.out / f"{stage}.failed"

    def task(self) -> AlignmentTask:
        if self._task is None:
            cfg = self.config
            kg1 = parse_triples(cfg.kg1_triples)
            kg2 = parse_triples(cfg.kg2_triples)
            links = parse_links(cfg.links)
            for s, t in links:
                if s not in kg1:
                    raise KeyError(f"link source {s!r} does not occur in {cfg.kg1_triples}")
                if t not in kg2:
                    raise KeyError(f"link target {t!r} does not occur in {cfg.kg2_triples}")
            seed, test = split_alignment(links, cfg.seed_fraction, cfg.rng_seed)
            self._task = AlignmentTask(kg1, kg2, seed, test)
            write_links(seed, self.artifact("seed_links.tsv"))
            write_links(test, self.artifact("test_links.tsv"))
        return self._task

    def require(self, stage, names):
        missing = [n for n in names if not self.artifact(n).is_file()]
        if missing:
            producers = sorted({s for s, arts in ARTIFACTS.items() for n in missing if n in arts})
            raise StageError(stage, f"missing upstream artifacts {missing}; run stage(s) {producers} first")
        for s, arts in ARTIFACTS.items():
            if any(n in arts for n in names) and self.marker(s).exists():
                raise StageError(stage, f"upstream stage {s!r} failed previously; rerun it first")


def _stage_structural(ws: Workspace):
    task = ws.task()
    Z1, Z2, M = structural_features(task, ws.config.training)
    save_embeddings(ws.artifact("embeddings_kg1.bin"), Z1)
    save_embeddings(ws.artifact("embeddings_kg2.bin"), Z2)
    save_matrix(ws.artifact("structural.mat"), M)


def _stage_semantic(ws: Workspace):
    task = ws.task()
    store = merge_stores([load_word_embeddings(p) for p in ws.config.word_vectors])
    save_matrix(ws.artifact("semantic.mat"),
                semantic_similarity_matrix(task.source_names(), task.target_names(), store))


def _stage_string(ws: Workspace):
    task = ws.task()
    save_matrix(ws.artifact("string.mat"),
                string_similarity_matrix(task.source_names(), task.target_names(), ws.config.string))


def _stage_fuse(ws: Workspace):
    features = ws.config.switches.enabled_features()
    names = [f"{f}.mat" for f in features]
    ws.require("fuse", names)
    matrices = {f: load_matrix(ws.artifact(n)) for f, n in zip(features, names)}
    fused, report = fuse_enabled(matrices, ws.config.fusion, adaptive=ws.config.switches.adaptive)
    save_matrix(ws.artifact("fused.mat"), fused)
    ws.artifact("fusion_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _stage_match(ws: Workspace):
    ws.require("match", ["fused.mat"])
    task = ws.task()
    fused = load_matrix(ws.artifact("fused.mat"))
    if ws.config.switches.collective and ws.config.trace:
        trace = []
        m = deferred_acceptance(preference_lists(fused), trace)
        mapping = m.pairs
        ws.artifact("proposal_trace.log").write_text(format_trace(trace), encoding="utf-8")
    else:
        mapping, _ = match_fused(fused, ws.config.switches.collective)
    src, tgt = task.test.sources, task.test.targets
    write_links(((src[u], tgt[v]) for u, v in sorted(mapping.items())), ws.artifact("matching.tsv"))


def _stage_evaluate(ws: Workspace):
    ws.require("evaluate", ["matching.tsv", "fused.mat"])
    task = ws.task()
    matching = read_matching(ws.artifact("matching.tsv"))
    fused = load_matrix(ws.artifact("fused.mat"))
    src_index = {s: i for i, s in enumerate(task.test.sources)}
    tgt_index = {t: j for j, t in enumerate(task.test.targets)}
    try:
        mapping = {src_index[s]: tgt_index[t] for s, t in matching.items()}
    except KeyError as exc:
        raise StageError("evaluate", f"matching mentions entity {exc} outside the test split") from None
    report = evaluate(mapping, fused, task.gold(), ws.config.hits_at, label=ws.config.switches.label)
    ws.artifact("eval_report.txt").write_text(report.to_text(), encoding="utf-8")
    return report


def read_matching(path) -> dict[str, str]:
    """Read a two-column matching file; sources must be unique, targets need not be."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if line:
                s, t = line.split("\t")
                out[s] = t
    return out


_RUNNERS = {
    "embed-structural": _stage_structural,
    "embed-semantic": _stage_semantic,
    "string-sim": _stage_string,
    "fuse": _stage_fuse,
    "match": _stage_match,
    "evaluate": _stage_evaluate,
}


def planned_stages(config: PipelineConfig) -> list[str]:
    enabled = {FEATURE_STAGE[f] for f in config.switches.enabled_features()}
    return [s for s in STAGES if s in enabled or s not in FEATURE_STAGE.values()]


def _run_stage(ws: Workspace, stage: str):
    if stage not in _RUNNERS:
        raise StageError(stage, f"unknown stage; choose from {', '.join(STAGES)}")
    marker = ws.marker(stage)
    if marker.exists():
        marker.unlink()
    log.info("stage %s", stage)
    try:
        return _RUNNERS[stage](ws)
    except BaseException as exc:
        marker.write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        if isinstance(exc, StageError) or not isinstance(exc, Exception):
            raise
        raise StageError(stage, str(exc)) from exc


def _locked(config: PipelineConfig):
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    return FileLock(str(out / ".lock"), timeout=0)


class LockedError(RuntimeError):
    pass


def _with_lock(config, fn):
    lock = _locked(config)
    try:
        lock.acquire()
    except Timeout:
        raise LockedError(f"another pipeline run holds {config.output}/.lock") from None
    try:
        return fn()
    finally:
        lock.release()


def run_stage(config: PipelineConfig, stage: str):
    ws = Workspace(config)
    return _with_lock(config, lambda: _run_stage(ws, stage))


def run_pipeline(config: PipelineConfig) -> EvalReport:
    """Run every enabled stage; returns the final evaluation report."""
    ws = Workspace(config)

    def go():
        report = None
        for stage in planned_stages(config):
            report = _run_stage(ws, stage)
        return report

    return _with_lock(config, go)

