"""Flat key=value run configuration shared by the command-line tools.

Every key has a default; unknown keys are rejected.  Values from a config
file are overridden by command-line flags (flags win).  All randomness in a
run flows from the single ``seed`` key; independent streams are derived per
purpose by ``training.split_seed``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from . import field as field_mod
from . import imgio
from . import training


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # network
    trunk_layers: int = 8
    trunk_width: int = 64
    pe_frequencies: int = 10
    skip_at: int = 4
    # optimisation
    iterations: int = 5000
    lambda_depth: float = 10.0 / 3.0
    pretrain_fraction: float = 0.2
    batch_rays: int = 1024
    lr: float = 5e-4
    lr_decay: float = 0.9
    lr_decay_every: int = 0
    n_stratified: int = 64
    n_guided: int = 64
    sigma_g: float = 0.0
    grad_clip: float = 0.0
    log_every: int = 50
    checkpoint_every: int = 0
    # run plumbing
    render_mode: str = "sur"
    scenario: str = "easy"
    dataset: str = ""
    out: str = "out"
    checkpoint: str = ""
    resume: str = ""
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.render_mode not in ("sur", "vol"):
            raise ConfigError(f"render_mode must be sur|vol, got {self.render_mode!r}")
        if self.scenario not in ("easy", "hard", "vhard"):
            raise ConfigError(
                f"scenario must be easy|hard|vhard, got {self.scenario!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {raw!r}") from exc


def make_run_config(file_values: dict | None = None,
                    overrides: dict | None = None) -> RunConfig:
    """Defaults, then config-file values, then explicit overrides."""
    merged = {}
    for source in (file_values or {}), (overrides or {}):
        for key, raw in source.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _convert(key, raw)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    return make_run_config(imgio.read_kv(path), overrides)


def save_run_config(path, rc: RunConfig) -> None:
    imgio.write_kv(path, {f.name: getattr(rc, f.name) for f in fields(RunConfig)})


def field_config(rc: RunConfig) -> field_mod.FieldConfig:
    return field_mod.FieldConfig(trunk_layers=rc.trunk_layers,
                                 trunk_width=rc.trunk_width,
                                 pe_frequencies=rc.pe_frequencies,
                                 skip_at=rc.skip_at, seed=rc.seed)


def train_config(rc: RunConfig) -> training.TrainConfig:
    return training.TrainConfig(iterations=rc.iterations,
                                lambda_depth=rc.lambda_depth,
                                pretrain_fraction=rc.pretrain_fraction,
                                batch_rays=rc.batch_rays, lr=rc.lr,
                                lr_decay=rc.lr_decay,
                                lr_decay_every=rc.lr_decay_every,
                                n_stratified=rc.n_stratified,
                                n_guided=rc.n_guided, sigma_g=rc.sigma_g,
                                render_mode=rc.render_mode, seed=rc.seed,
                                log_every=rc.log_every,
                                checkpoint_every=rc.checkpoint_every,
                                grad_clip=rc.grad_clip)


def defaults_table() -> list[tuple[str, str]]:
    """(key, default) pairs, the source for --help listings."""
    rc = RunConfig()
    return [(f.name, repr(getattr(rc, f.name))) for f in fields(RunConfig)]
