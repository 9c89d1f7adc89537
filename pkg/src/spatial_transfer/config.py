"""Experiment configuration: defaults, file loading and hashing.

Config files are YAML; JSON documents are valid YAML and load the same way.
Every key is optional.  Example::

    processes: [stationary, nonstationary]
    target_sizes: [25, 64, 100, 225]
    replicates: 30
    seed: 2024
    basis:
      scaled: true
      levels:
        - {rows: 3, cols: 3}
        - {rows: 5, cols: 5}
        - {rows: 7, cols: 7}
        - {rows: 7, cols: 8, theta: 0.4}
    hidden: [100, 100, 100, 100, 100, 100, 100]
    matern: {sigma2: 1.0, rho: 0.2, tau2: 0.01}
    nonstationary_noise_var: 1.0e-6
    source_size: 4900
    test_size: 2000
    pretrain: {epochs: 1500, learning_rate: 0.001, batch_size: 64, validation_fraction: 0.2}
    finetune: {epochs: 1000, learning_rate: 0.001, batch_size: 64}
    target_only: {epochs: 1000, learning_rate: 0.001, batch_size: 64}
    kriging: {params: ml}        # or "true" to krige with the generating parameters
    pretrain_per_replicate: false
    output_dir: results
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .basis import DEFAULT_LEVELS, MultiResolutionBasis, build_basis
from .errors import ConfigError
from .gp import MaternParams
from .net import TrainConfig
from .surfaces import NONSTATIONARY_NOISE_VAR, PROCESSES, ReplicateConfig

METHODS = ("transfer", "target_only", "kriging")


def _default_levels():
    return [{"rows": r, "cols": c} for r, c in DEFAULT_LEVELS]


@dataclass(frozen=True)
class ExperimentConfig:
    processes: tuple = PROCESSES
    target_sizes: tuple = (25, 64, 100, 225)
    replicates: int = 30
    seed: int = 2024
    basis_levels: tuple = field(default_factory=lambda: tuple(_default_levels()))
    basis_scaled: bool = True
    hidden: tuple = (100,) * 7
    matern: MaternParams = field(default_factory=MaternParams)
    nonstationary_noise_var: float = NONSTATIONARY_NOISE_VAR
    source_size: int = 4900
    test_size: int = 2000
    target_jitter: float = 0.1
    pretrain: TrainConfig = TrainConfig(epochs=1500, validation_fraction=0.2)
    finetune: TrainConfig = TrainConfig(epochs=1000)
    target_only: TrainConfig = TrainConfig(epochs=1000)
    kriging_params: str = "ml"
    pretrain_per_replicate: bool = False
    output_dir: str = "results"

    def __post_init__(self):
        for proc in self.processes:
            if proc not in PROCESSES:
                raise ConfigError(f"unknown process {proc!r}; expected one of {PROCESSES}")
        if not self.processes:
            raise ConfigError("at least one process is required")
        if not self.target_sizes or any(n < 1 for n in self.target_sizes):
            raise ConfigError("target sizes must be positive")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.kriging_params not in ("ml", "true"):
            raise ConfigError("kriging.params must be 'ml' or 'true'")

    def basis(self) -> MultiResolutionBasis:
        return build_basis(self.basis_levels, scaled=self.basis_scaled)

    def network_dims(self) -> tuple:
        return (self.basis().total_dim,) + tuple(self.hidden) + (1,)

    def replicate_config(self, target_size: int) -> ReplicateConfig:
        try:
            return ReplicateConfig(
                target_size=target_size,
                source_size=self.source_size,
                test_size=self.test_size,
                matern=self.matern,
                nonstationary_noise_var=self.nonstationary_noise_var,
                target_jitter=self.target_jitter,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "processes": list(self.processes),
            "target_sizes": list(self.target_sizes),
            "replicates": self.replicates,
            "seed": self.seed,
            "basis": {"scaled": self.basis_scaled, "levels": [dict(lv) for lv in self.basis_levels]},
            "hidden": list(self.hidden),
            "matern": {"sigma2": self.matern.sigma2, "rho": self.matern.rho, "tau2": self.matern.tau2},
            "nonstationary_noise_var": self.nonstationary_noise_var,
            "source_size": self.source_size,
            "test_size": self.test_size,
            "target_jitter": self.target_jitter,
            "pretrain": asdict(self.pretrain),
            "finetune": asdict(self.finetune),
            "target_only": asdict(self.target_only),
            "kriging": {"params": self.kriging_params},
            "pretrain_per_replicate": self.pretrain_per_replicate,
            "output_dir": self.output_dir,
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; the output directory is excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def _train_config(raw, default: TrainConfig, name: str) -> TrainConfig:
    if raw is None:
        return default
    unknown = set(raw) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    try:
        # YAML reads "1e-8" as a string, so coerce to the field's own type
        kw = {k: type(getattr(default, k))(v) for k, v in raw.items()}
        return replace(default, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


_TOP_KEYS = {
    "processes", "target_sizes", "replicates", "seed", "basis", "hidden", "matern",
    "nonstationary_noise_var", "source_size", "test_size", "target_jitter", "pretrain",
    "finetune", "target_only", "kriging", "pretrain_per_replicate", "output_dir",
}


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = ExperimentConfig()
    kw = {}
    for key in ("replicates", "seed", "source_size", "test_size"):
        if key in raw:
            kw[key] = int(raw[key])
    for key in ("nonstationary_noise_var", "target_jitter"):
        if key in raw:
            kw[key] = float(raw[key])
    for key in ("processes", "target_sizes", "hidden"):
        if key in raw:
            kw[key] = tuple(raw[key])
    if "pretrain_per_replicate" in raw:
        kw["pretrain_per_replicate"] = bool(raw["pretrain_per_replicate"])
    if "output_dir" in raw:
        kw["output_dir"] = str(raw["output_dir"])
    if "basis" in raw:
        b = raw["basis"] or {}
        if "levels" in b:
            levels = []
            for lv in b["levels"]:
                rec = {"rows": int(lv["rows"]), "cols": int(lv["cols"])}
                if lv.get("theta") is not None:
                    rec["theta"] = float(lv["theta"])
                levels.append(rec)
            kw["basis_levels"] = tuple(levels)
        if "scaled" in b:
            kw["basis_scaled"] = bool(b["scaled"])
    if "matern" in raw:
        try:
            kw["matern"] = replace(base.matern, **{k: float(v) for k, v in raw["matern"].items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"matern: {exc}") from exc
    for key in ("pretrain", "finetune", "target_only"):
        if key in raw:
            kw[key] = _train_config(raw[key], getattr(base, key), key)
    if "kriging" in raw:
        kw["kriging_params"] = str((raw["kriging"] or {}).get("params", "ml"))
    try:
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)
