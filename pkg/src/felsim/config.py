"""INI-style run configuration: parsing, validation, and builders for the core types.

A config file has sections [noise], [pulse], [system], [ensemble], [scan].
All quantities are in units of gamma2 (so gamma2 = 1 unless stated).
Validation collects every error (unknown keys, type mismatches, semantic
violations) instead of stopping at the first; syntax errors carry the line
number reported by the parser.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SystemSpec
from .ensemble import (
    DriveRecipe,
    EnsembleConfig,
    FieldMode,
    ScanSpec,
    ScanVariable,
)
from .errors import ConfigurationError
from .noise import PsdKind, PsdSpec
from .pulse import EnvelopeKind, EnvelopeSpec

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_file"]

_NOISE_KINDS = ("none", "gaussian", "lorentzian", "sech", "pdm")
_ENVELOPES = ("gaussian", "profile2", "flat")
_SCAN_VARIABLES = ("delta_s", "delta_d", "chi", "omega_s0", "omega_d0")
_SWEEPABLE = ("sweep_chi", "sweep_sigma_omega", "sweep_omega_s0", "sweep_omega_d0",
              "sweep_tau_s", "sweep_noise_kind")

_SCHEMA = {
    "noise": ("kind", "sigma_omega", "chi"),
    "pulse": ("envelope_s", "tau_s", "t0_s", "envelope_d", "tau_d", "t0_d"),
    "system": ("levels", "gamma2", "gamma3", "omega_s0", "omega_d0",
               "delta_s", "delta_d", "t_final"),
    "ensemble": ("n_realizations", "master_seed", "worker_count", "batch_size"),
    "scan": ("variable", "grid") + _SWEEPABLE,
}


class ConfigError(ConfigurationError):
    """All configuration problems found in one pass."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


@dataclass
class RunConfig:
    """Flat, validated view of a configuration file."""

    noise_kind: str = "none"
    sigma_omega: float | None = None
    chi: float | None = None

    envelope_s: str = "gaussian"
    tau_s: float = 3.0
    t0_s: float | None = None
    envelope_d: str = "gaussian"
    tau_d: float | None = None
    t0_d: float | None = None

    levels: int = 2
    gamma2: float = 1.0
    gamma3: float = 1.0
    omega_s0: float = 0.0
    omega_d0: float = 0.0
    delta_s: float = 0.0
    delta_d: float = 0.0
    t_final: float = 32.0

    n_realizations: int = 5000
    master_seed: int = 0
    worker_count: int = 0
    batch_size: int = 250

    scan_variable: str | None = None
    scan_grid: np.ndarray | None = None
    sweeps: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    # -- derived builders -------------------------------------------------

    def sigma_omega_value(self) -> float:
        if self.sigma_omega is not None:
            return self.sigma_omega
        if self.chi is not None:
            return self.chi / self.tau_s
        raise ConfigurationError("stochastic noise requires sigma_omega or chi")

    def s_envelope(self) -> EnvelopeSpec:
        t0 = self.t0_s if self.t0_s is not None else 0.5 * self.t_final
        if self.envelope_s == "flat":
            t0 = self.t0_s if self.t0_s is not None else 0.0
            return EnvelopeSpec(EnvelopeKind.FLAT, tau=self.tau_s, t0=t0)
        return EnvelopeSpec(EnvelopeKind(self.envelope_s), tau=self.tau_s, t0=t0)

    def d_envelope(self) -> EnvelopeSpec | None:
        if self.levels == 2:
            return None
        t0 = self.t0_d if self.t0_d is not None else 0.5 * self.t_final
        if self.envelope_d == "flat":
            t0 = self.t0_d if self.t0_d is not None else 0.0
            return EnvelopeSpec(EnvelopeKind.FLAT, tau=self.tau_d, t0=t0)
        return EnvelopeSpec(EnvelopeKind(self.envelope_d), tau=self.tau_d, t0=t0)

    def system(self) -> SystemSpec:
        return SystemSpec(
            levels=self.levels,
            gamma2=self.gamma2,
            gamma3=self.gamma3 if self.levels == 3 else 0.0,
            omega_s0=self.omega_s0,
            omega_d0=self.omega_d0 if self.levels == 3 else 0.0,
            delta_s=self.delta_s,
            delta_d=self.delta_d,
        )

    def recipe(self) -> DriveRecipe:
        if self.noise_kind == "none":
            mode, psd, gamma = FieldMode.FOURIER, None, None
        elif self.noise_kind == "pdm":
            mode, psd = FieldMode.PDM, None
            gamma = 2.0 * math.sqrt(2.0 * math.log(2.0)) * self.sigma_omega_value()
        else:
            mode, gamma = FieldMode.CHAOTIC, None
            psd = PsdSpec(PsdKind(self.noise_kind), self.sigma_omega_value())
        return DriveRecipe(
            s_mode=mode,
            s_envelope=self.s_envelope(),
            t_final=self.t_final,
            psd=psd,
            pdm_linewidth=gamma,
            d_envelope=self.d_envelope(),
        )

    def ensemble(self) -> EnsembleConfig:
        return EnsembleConfig(
            n_realizations=self.n_realizations,
            master_seed=self.master_seed,
            worker_count=self.worker_count,
            batch_size=self.batch_size,
        )

    def scan(self) -> ScanSpec:
        if self.scan_variable is None or self.scan_grid is None:
            raise ConfigurationError("config has no [scan] variable/grid")
        return ScanSpec(
            variable=ScanVariable(self.scan_variable),
            grid=self.scan_grid,
            system=self.system(),
            recipe=self.recipe(),
        )


def _parse_grid(text: str) -> np.ndarray:
    """Either 'start:stop:count' or a comma-separated list of values."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("grid range must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be >= 1")
        return np.linspace(start, stop, count)
    return np.array([float(v) for v in text.split(",")])


def _parse_list(text: str, conv=float) -> list:
    return [conv(v.strip()) for v in text.split(",") if v.strip()]


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config document; raises ConfigError listing all problems."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}: content outside a [section]"]) from exc
    except configparser.ParsingError as exc:
        msgs = [f"syntax error at line {lineno}: {line.strip()!r}" for lineno, line in exc.errors]
        raise ConfigError(msgs) from exc
    except configparser.Error as exc:
        raise ConfigError([f"syntax error: {exc}"]) from exc

    errors: list[str] = []
    cfg = RunConfig()

    for section in cp.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                errors.append(f"unknown key [{section}].{key}")

    def get(section, key, conv, default, check=None, describe=""):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            value = conv(raw)
        except (ValueError, TypeError):
            errors.append(f"[{section}].{key}: cannot parse {raw!r}{describe}")
            return default
        if check is not None and not check(value):
            errors.append(f"[{section}].{key}: invalid value {raw!r}{describe}")
            return default
        return value

    cfg.noise_kind = get("noise", "kind", str.lower, "none",
                         lambda v: v in _NOISE_KINDS, f" (expected one of {_NOISE_KINDS})")
    cfg.sigma_omega = get("noise", "sigma_omega", float, None, lambda v: v > 0,
                          " (must be > 0)")
    cfg.chi = get("noise", "chi", float, None, lambda v: v > 0, " (must be > 0)")

    cfg.envelope_s = get("pulse", "envelope_s", str.lower, "gaussian",
                         lambda v: v in _ENVELOPES, f" (expected one of {_ENVELOPES})")
    cfg.tau_s = get("pulse", "tau_s", float, 3.0, lambda v: v > 0, " (must be > 0)")
    cfg.t0_s = get("pulse", "t0_s", float, None)
    cfg.envelope_d = get("pulse", "envelope_d", str.lower, "gaussian",
                         lambda v: v in _ENVELOPES, f" (expected one of {_ENVELOPES})")
    cfg.tau_d = get("pulse", "tau_d", float, None, lambda v: v > 0, " (must be > 0)")
    cfg.t0_d = get("pulse", "t0_d", float, None)

    cfg.levels = get("system", "levels", int, 2, lambda v: v in (2, 3), " (must be 2 or 3)")
    cfg.gamma2 = get("system", "gamma2", float, 1.0, lambda v: v > 0, " (must be > 0)")
    cfg.gamma3 = get("system", "gamma3", float, 1.0, lambda v: v >= 0, " (must be >= 0)")
    cfg.omega_s0 = get("system", "omega_s0", float, 0.0, lambda v: v >= 0, " (must be >= 0)")
    cfg.omega_d0 = get("system", "omega_d0", float, 0.0, lambda v: v >= 0, " (must be >= 0)")
    cfg.delta_s = get("system", "delta_s", float, 0.0)
    cfg.delta_d = get("system", "delta_d", float, 0.0)
    cfg.t_final = get("system", "t_final", float, 32.0, lambda v: v > 0, " (must be > 0)")

    cfg.n_realizations = get("ensemble", "n_realizations", int, 5000, lambda v: v >= 1,
                             " (must be >= 1)")
    cfg.master_seed = get("ensemble", "master_seed", int, 0, lambda v: 0 <= v < 1 << 64,
                          " (must be an unsigned 64-bit integer)")
    cfg.worker_count = get("ensemble", "worker_count", int, 0, lambda v: v >= 0,
                           " (must be >= 0)")
    cfg.batch_size = get("ensemble", "batch_size", int, 250, lambda v: v >= 1,
                         " (must be >= 1)")

    cfg.scan_variable = get("scan", "variable", str.lower, None,
                            lambda v: v in _SCAN_VARIABLES, f" (expected one of {_SCAN_VARIABLES})")
    if cp.has_option("scan", "grid"):
        raw = cp.get("scan", "grid")
        try:
            grid = _parse_grid(raw)
            if grid.size > 1:
                d = np.diff(grid)
                if not (np.all(d > 0) or np.all(d < 0)):
                    errors.append("[scan].grid: values must be strictly monotone")
            cfg.scan_grid = grid
        except ValueError as exc:
            errors.append(f"[scan].grid: {exc}")

    for key in _SWEEPABLE:
        if not cp.has_option("scan", key):
            continue
        raw = cp.get("scan", key)
        try:
            if key == "sweep_noise_kind":
                values = _parse_list(raw, str.lower)
                bad = [v for v in values if v not in _NOISE_KINDS]
                if bad:
                    errors.append(f"[scan].{key}: unknown noise kind(s) {bad}")
                    continue
            else:
                values = _parse_list(raw, float)
                if key in ("sweep_chi", "sweep_sigma_omega", "sweep_tau_s") and any(
                    v <= 0 for v in values
                ):
                    errors.append(f"[scan].{key}: values must be > 0")
                    continue
                if key in ("sweep_omega_s0", "sweep_omega_d0") and any(v < 0 for v in values):
                    errors.append(f"[scan].{key}: values must be >= 0")
                    continue
            if not values:
                errors.append(f"[scan].{key}: empty list")
                continue
            cfg.sweeps[key.removeprefix("sweep_")] = values
        except ValueError:
            errors.append(f"[scan].{key}: cannot parse {raw!r}")

    # -- cross-field checks ----------------------------------------------

    stochastic = cfg.noise_kind != "none" or (
        "noise_kind" in cfg.sweeps and any(k != "none" for k in cfg.sweeps["noise_kind"])
    )
    if stochastic and cfg.sigma_omega is None and cfg.chi is None \
            and "chi" not in cfg.sweeps and "sigma_omega" not in cfg.sweeps:
        errors.append("[noise]: stochastic kind requires sigma_omega or chi (or a sweep of them)")
    if cfg.sigma_omega is not None and cfg.chi is not None:
        errors.append("[noise]: give only one of sigma_omega and chi")

    if cfg.levels == 3:
        if cfg.tau_d is None:
            errors.append("[pulse].tau_d: required for levels = 3")
        elif cfg.omega_d0 > cfg.omega_s0 and cfg.tau_d <= cfg.tau_s:
            cfg.warnings.append(
                "[pulse]: pump duration tau_d <= probe duration tau_s; the doublet may be "
                "distorted (the pump should dress the atom before the probe rises)"
            )
    else:
        if cfg.omega_d0 > 0:
            errors.append("[system].omega_d0: requires levels = 3")
        if cfg.scan_variable in ("delta_d", "omega_d0"):
            errors.append(f"[scan].variable: {cfg.scan_variable} requires levels = 3")
        if "omega_d0" in cfg.sweeps:
            errors.append("[scan].sweep_omega_d0: requires levels = 3")

    if cfg.scan_variable == "chi" and cfg.noise_kind in ("none",) and "noise_kind" not in cfg.sweeps:
        errors.append("[scan].variable: chi scan requires a stochastic noise kind")

    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config_file(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
