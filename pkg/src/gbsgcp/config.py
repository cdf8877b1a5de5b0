"""YAML run configuration (versioned schema) and the objects it builds."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .gcp import DEFAULT_PILOT, DEFAULT_THRESHOLD, BinningSpec
from .linear_network import (SqueezerBank, TransmissionMatrix, apply_uniform_loss, haar_unitary,
                             read_matrix, read_squeezers, validate_physicality)
from .phase_space import EnsemblePlan

SCHEMA_VERSION = 1
_SECTIONS = {"schema_version", "inputs", "network", "ensemble", "binning", "dataset", "exact",
             "fake", "validate", "fit", "output"}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _section(raw: dict, name: str, allowed: set) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
    return sec


@dataclass
class RunConfig:
    """Parsed configuration. ``raw`` keeps the original mapping for hashing and reports."""

    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw or {}, path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> RunConfig:
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
        unknown = set(raw) - _SECTIONS
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        return cls(raw, Path(base_dir) if base_dir else Path.cwd())

    # -- identity ---------------------------------------------------------
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, name: str, allowed: set) -> dict:
        return _section(self.raw, name, allowed)

    # -- physical inputs --------------------------------------------------
    def bank(self) -> SqueezerBank:
        sec = self.section("inputs", {"r", "n_inputs", "r_file", "epsilon"})
        eps = float(sec.get("epsilon", 0.0))
        try:
            if "r_file" in sec:
                if "r" in sec:
                    raise ConfigError("[inputs] give either r_file or r, not both")
                path = self._path(sec["r_file"])
                if not path.is_file():
                    raise ConfigError(f"[inputs] r_file {path} not found")
                return read_squeezers(path, eps)
            if "r" not in sec:
                raise ConfigError("[inputs] needs r (with n_inputs) or r_file")
            r = sec["r"]
            if isinstance(r, (list, tuple)):
                return SqueezerBank(np.array(r, float), eps)
            n = sec.get("n_inputs", self.raw.get("network", {}).get("M"))
            if n is None:
                raise ConfigError("[inputs] uniform r needs n_inputs")
            return SqueezerBank.uniform(int(n), float(r), eps)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[inputs] {exc}") from exc

    def matrix(self) -> TransmissionMatrix:
        sec = self.section("network", {"source", "M", "seed", "t_amp", "file", "t_correction"})
        source = sec.get("source")
        t_corr = float(sec.get("t_correction", 1.0))
        try:
            if source == "haar":
                if "file" in sec:
                    raise ConfigError("[network] source=haar cannot also name a file")
                if "M" not in sec:
                    raise ConfigError("[network] haar source needs M")
                U = haar_unitary(int(sec["M"]), int(sec.get("seed", 0)))
                T = apply_uniform_loss(U, float(sec.get("t_amp", 1.0))).with_correction(t_corr)
            elif source == "file":
                if "file" not in sec:
                    raise ConfigError("[network] file source needs a file path")
                path = self._path(sec["file"])
                if not path.is_file():
                    raise ConfigError(f"[network] matrix file {path} not found")
                T = read_matrix(path, t_corr)
            else:
                raise ConfigError("[network] source must be 'haar' or 'file'")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[network] {exc}") from exc
        ok, diag = validate_physicality(T)
        if not ok:
            raise ConfigError(f"[network] matrix is not physical; singular values {diag['offending']} exceed 1")
        return T

    def plan(self) -> EnsemblePlan:
        sec = self.section("ensemble", {"n_samples", "n_traj", "seed", "workers"})
        try:
            return EnsemblePlan(int(sec.get("n_samples", 500)), int(sec.get("n_traj", 4800)),
                                int(sec.get("seed", 0)))
        except ValueError as exc:
            raise ConfigError(f"[ensemble] {exc}") from exc

    @property
    def workers(self):
        w = self.section("ensemble", {"n_samples", "n_traj", "seed", "workers"}).get("workers")
        return None if w is None else int(w)

    def binnings(self, M: int) -> list[BinningSpec]:
        """One spec per requested dimension (``d`` may be a list) or explicit subsets."""
        sec = self.section("binning", {"d", "subsets", "windows", "threshold", "pilot_samples"})
        try:
            if "subsets" in sec:
                specs = [BinningSpec(tuple(tuple(s) for s in sec["subsets"]), sec.get("windows"))]
            else:
                ds = sec.get("d", 1)
                ds = ds if isinstance(ds, list) else [ds]
                if "windows" in sec and len(ds) > 1:
                    raise ConfigError("[binning] explicit windows need a single d")
                specs = [BinningSpec.contiguous(M, int(d), sec.get("windows")) for d in ds]
            for s in specs:
                s.check_modes(M)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[binning] {exc}") from exc
        return specs

    @property
    def threshold(self) -> float:
        sec = self.section("binning", {"d", "subsets", "windows", "threshold", "pilot_samples"})
        t = float(sec.get("threshold", DEFAULT_THRESHOLD))
        if t <= 0:
            raise ConfigError("[binning] threshold must be positive")
        return t

    @property
    def pilot_samples(self) -> int:
        sec = self.section("binning", {"d", "subsets", "windows", "threshold", "pilot_samples"})
        return int(sec.get("pilot_samples", DEFAULT_PILOT))

    def dataset_path(self) -> tuple[Path, str]:
        sec = self.section("dataset", {"path", "format"})
        if "path" not in sec:
            raise ConfigError("[dataset] path is required for this command")
        path = self._path(sec["path"])
        if not path.is_file():
            raise ConfigError(f"[dataset] {path} not found")
        return path, sec.get("format", "text")

    def output_dir(self, override=None) -> Path:
        sec = self.section("output", {"dir", "prefix"})
        d = Path(override) if override else self._path(sec.get("dir", "out"))
        d.mkdir(parents=True, exist_ok=True)
        return d

    @property
    def prefix(self) -> str:
        return str(self.section("output", {"dir", "prefix"}).get("prefix", "run"))
