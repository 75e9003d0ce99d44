"""Run configuration: one JSON file plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .rollout.backends import DecodingParams
from .traces import DATASET_FORMATS

TRAINING_STAGES = ("base", "sft", "sft+rl")
BACKEND_KINDS = ("synthetic", "http_completions")

# Synthetic world presets used by the oracle battery. Injective position-wise
# codes at strength 0.4 make most traces reveal the answer gradually.
ALIGNED_PRESET: dict[str, Any] = {"generator": "aligned", "seed": 0, "sizes": [8, 6, 4], "horizon": 6,
                                  "strength": 0.4, "resolution": None, "answer_concentration": 4.0,
                                  "code": "reveal"}
# Binary answers keep P(belief = gold) near 1/2, so the misaligned battery
# has no systematic sign.
MISALIGNED_PRESET: dict[str, Any] = {"generator": "misaligned", "seed": 0, "sizes": [8, 6, 2], "horizon": 6,
                                     "strength": 0.4, "commitment": 0.8, "resolution": None,
                                     "answer_concentration": 4.0, "code": "reveal"}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path such as ``backend.endpoint``."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass
class BackendConfig:
    kind: str = "synthetic"
    # http_completions
    endpoint: str | None = None
    model: str | None = None
    auth_env: str | None = None        # name of the env var holding the token
    timeout: float = 60.0
    prompt_prefix: str = ""
    prompt_suffix: str = ""
    # synthetic: a saved world file or generator parameters
    world_path: str | None = None
    world: dict[str, Any] | None = field(default_factory=lambda: dict(ALIGNED_PRESET))


@dataclass
class DatasetConfig:
    format: str = "synthetic"          # synthetic or one of DATASET_FORMATS
    path: str | None = None
    n_questions: int = 8               # synthetic only
    limit: int | None = None


@dataclass
class RunConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    decoding: DecodingParams = field(default_factory=DecodingParams)
    M: int = 4
    N: int = 16
    stride: int | float | None = None
    alpha_entropy: float = 0.0
    alpha_surprisal: float = 0.5
    seed: int = 0
    out_dir: str = "runs/default"
    model_tag: str = "synthetic"
    dataset_tag: str = "synthetic"
    training_stage: str = "base"
    max_in_flight: int = 8
    allow_degenerate: bool = False

    @property
    def group(self) -> dict[str, str]:
        return {"model_tag": self.model_tag, "dataset_tag": self.dataset_tag,
                "training_stage": self.training_stage}

    def validate(self) -> "RunConfig":
        b, d = self.backend, self.dataset
        if b.kind not in BACKEND_KINDS:
            raise ConfigError("backend.kind", f"expected one of {BACKEND_KINDS}, got {b.kind!r}")
        if b.kind == "http_completions":
            if not b.endpoint:
                raise ConfigError("backend.endpoint", "required for http_completions")
            if not b.model:
                raise ConfigError("backend.model", "required for http_completions")
            if d.format == "synthetic":
                raise ConfigError("dataset.format", "synthetic questions need the synthetic backend")
        else:
            if b.world_path is not None and not Path(b.world_path).is_file():
                raise ConfigError("backend.world_path", f"no such file {b.world_path!r}")
            if b.world_path is None and not b.world:
                raise ConfigError("backend.world", "synthetic backend needs world_path or world parameters")
            if b.world_path is None and b.world.get("generator") not in ("aligned", "misaligned"):
                raise ConfigError("backend.world.generator", "expected 'aligned' or 'misaligned'")
        if d.format != "synthetic":
            if d.format not in DATASET_FORMATS:
                raise ConfigError("dataset.format", f"expected synthetic or one of {DATASET_FORMATS}")
            if not d.path or not Path(d.path).is_file():
                raise ConfigError("dataset.path", f"no such file {d.path!r}")
        elif d.n_questions < 1:
            raise ConfigError("dataset.n_questions", "must be positive")
        if d.limit is not None and d.limit < 1:
            raise ConfigError("dataset.limit", "must be positive")
        try:
            self.decoding.validate(self.allow_degenerate)
        except ValueError as e:
            raise ConfigError("decoding", str(e)) from None
        for name in ("M", "N", "max_in_flight"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be at least 1")
        if self.stride is not None and not (self.stride >= 1 or 0 < self.stride < 1):
            raise ConfigError("stride", "must be a positive integer or a fraction in (0, 1)")
        for name in ("alpha_entropy", "alpha_surprisal"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        if self.training_stage not in TRAINING_STAGES:
            raise ConfigError("training_stage", f"expected one of {TRAINING_STAGES}")
        return self

    def to_dict(self, include_out_dir: bool = True) -> dict[str, Any]:
        d = asdict(self)
        if not include_out_dir:
            d.pop("out_dir")
        return d

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        sub = {"backend": BackendConfig, "dataset": DatasetConfig, "decoding": DecodingParams}
        for name, typ in sub.items():
            if name in doc:
                val = doc[name]
                if not isinstance(val, dict):
                    raise ConfigError(name, "expected an object")
                names = {f.name for f in fields(typ)}
                bad = sorted(set(val) - names)
                if bad:
                    raise ConfigError(f"{name}.{bad[0]}", "unknown field")
                doc[name] = typ(**val)
        return cls(**doc)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"no such file {str(p)!r}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config", "expected a JSON object")
    return RunConfig.from_dict(doc)


def apply_overrides(cfg: RunConfig, *, seed: int | None = None, out: str | None = None,
                    backend: str | None = None, n_rollouts: int | None = None,
                    stride: float | None = None, alpha_surprisal: float | None = None,
                    allow_degenerate: bool | None = None) -> RunConfig:
    """Command-line flags win over the file. ``backend`` is a kind or an endpoint URL."""
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["out_dir"] = out
    if n_rollouts is not None:
        changes["N"] = n_rollouts
    if stride is not None:
        changes["stride"] = int(stride) if float(stride).is_integer() and stride >= 1 else stride
    if alpha_surprisal is not None:
        changes["alpha_surprisal"] = alpha_surprisal
    if allow_degenerate:
        changes["allow_degenerate"] = True
    if backend is not None:
        if backend.startswith(("http://", "https://")):
            changes["backend"] = replace(cfg.backend, kind="http_completions", endpoint=backend)
        else:
            changes["backend"] = replace(cfg.backend, kind=backend)
    return replace(cfg, **changes)
