"""Pipeline configuration loaded from a TOML file.

Relative paths are resolved against the directory holding the config file.
API keys are never read from the file; each annotator names the environment
variable that holds its key.

Example::

    seed = 13
    k = 5
    token_budget = 2500

    [paths]
    unlabeled = "data/unlabeled.jsonl"
    gold = "data/gold.jsonl"
    annotations = "out/annotations.jsonl"

    [[annotators]]
    id = "qwen2-72b-instruct"
    endpoint_url = "http://127.0.0.1:8000"
    model = "Qwen/Qwen2-72B-Instruct"

    [consensus]
    required = ["qwen2-72b-instruct", "llama3-8b", "deproberta"]
    extra_annotations = ["out/finetuned_annotations.jsonl"]

    [ensemble]
    weights = "ensemble.json"
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import UserError
from .gateway import DEFAULT_BACKOFF, DEFAULT_MAX_NEW_TOKENS, DEFAULT_RETRIES, DEFAULT_TIMEOUT

DEFAULT_PATHS = {
    "unlabeled": "data/unlabeled.jsonl",
    "gold": "data/gold.jsonl",
    "annotations": "out/annotations.jsonl",
    "consensus_report": "out/consensus_report.json",
    "train_set": "out/train_set.jsonl",
    "folds": "out/folds.json",
    "split_dataset": "out/train_set_truncated.jsonl",
    "predictions": "out/member_predictions.jsonl",
    "ensemble_predictions": "out/ensemble_predictions.jsonl",
    "report": "out/report.json",
    "stats": "out/length_histogram.csv",
}


class ConfigError(UserError):
    pass


@dataclass(frozen=True)
class AnnotatorConfig:
    id: str
    endpoint_url: str
    model: str
    temperature: float = 0.0
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    classification_template: Optional[Path] = None
    moveon_template: Optional[Path] = None
    exemplars: Optional[int] = None
    api_key_env: Optional[str] = "OPENAI_API_KEY"
    retries: int = DEFAULT_RETRIES
    backoff: float = DEFAULT_BACKOFF
    timeout: float = DEFAULT_TIMEOUT
    reprompts: int = 1
    moveon_to_indicator: bool = False


@dataclass
class PipelineConfig:
    base_dir: Path = field(default_factory=Path.cwd)
    seed: int = 0
    k: int = 5
    token_budget: int = 2500
    parallelism: int = 1
    paths: dict[str, Path] = field(default_factory=dict)
    annotators: list[AnnotatorConfig] = field(default_factory=list)
    required_annotators: Optional[list[str]] = None
    extra_annotations: list[Path] = field(default_factory=list)
    ensemble_weights: Optional[Path] = None
    ensemble_members: Optional[dict[str, float]] = None

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.token_budget < 2:
            raise ConfigError(f"token_budget must be >= 2, got {self.token_budget}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        for key, default in DEFAULT_PATHS.items():
            self.paths.setdefault(key, self.base_dir / default)

    def path(self, key: str) -> Path:
        return self.paths[key]

    def resolve(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @classmethod
    def load(cls, path: str | Path) -> PipelineConfig:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, path.resolve().parent)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path) -> PipelineConfig:
        base_dir = Path(base_dir)

        def rel(v):
            p = Path(v)
            return p if p.is_absolute() else base_dir / p

        known = {"seed", "k", "token_budget", "parallelism", "paths", "annotators", "consensus", "ensemble"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        paths = {k: rel(v) for k, v in data.get("paths", {}).items()}
        bad = set(paths) - set(DEFAULT_PATHS)
        if bad:
            raise ConfigError(f"unknown [paths] entries: {', '.join(sorted(bad))}")

        annotators = []
        for entry in data.get("annotators", []):
            entry = dict(entry)
            for key in ("classification_template", "moveon_template"):
                if entry.get(key):
                    entry[key] = rel(entry[key])
                    if not entry[key].is_file():
                        raise ConfigError(f"{key} not found: {entry[key]}")
            if "api_key" in entry:
                raise ConfigError("API keys belong in environment variables; use api_key_env")
            try:
                annotators.append(AnnotatorConfig(**entry))
            except TypeError as exc:
                raise ConfigError(f"bad [[annotators]] entry: {exc}") from None
        ids = [a.id for a in annotators]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate annotator ids: {ids}")

        consensus = data.get("consensus", {})
        ensemble = data.get("ensemble", {})
        members = ensemble.get("members")
        if ensemble.get("weights") and not rel(ensemble["weights"]).is_file():
            raise ConfigError(f"ensemble weights file not found: {rel(ensemble['weights'])}")
        try:
            return cls(
                base_dir=base_dir,
                seed=int(data.get("seed", 0)),
                k=int(data.get("k", 5)),
                token_budget=int(data.get("token_budget", 2500)),
                parallelism=int(data.get("parallelism", 1)),
                paths=paths,
                annotators=annotators,
                required_annotators=consensus.get("required"),
                extra_annotations=[rel(p) for p in consensus.get("extra_annotations", [])],
                ensemble_weights=rel(ensemble["weights"]) if ensemble.get("weights") else None,
                ensemble_members={str(k): float(v) for k, v in members.items()} if members else None,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
