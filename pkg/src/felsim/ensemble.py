"""Monte Carlo orchestration: per-realization streams, parallel batches, scan reduction.

Every realization draws from its own counter-derived Philox stream keyed by
``(master_seed, realization_index)``, so results are a pure function of the
seed and the realization count.  Realizations are processed in fixed-size
batches whose boundaries depend only on the configuration; batch partial sums
are combined in batch order, making every output bit independent of the
worker count and of scheduling.
"""

from __future__ import annotations

import enum
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    SystemSpec,
    _rk4_three,
    _rk4_two,
    default_step_target,
    sample_drive_block,
    substeps_for,
)
from .errors import ConfigurationError, IntegrationError
from .noise import FrequencyGrid, PsdSpec, sample_noise_block
from .pulse import EnvelopeSpec, pdm_modulation_trace

__all__ = [
    "FieldMode",
    "ScanVariable",
    "DriveRecipe",
    "EnsembleConfig",
    "ScanSpec",
    "PointResult",
    "ScanResult",
    "stream_for",
    "run_point",
    "run_scan",
]

_SEED_LIMIT = 1 << 64


class FieldMode(enum.Enum):
    """How the lower-transition field of one realization is constructed."""

    CHAOTIC = "chaotic"
    PDM = "pdm"
    FOURIER = "fourier"


class ScanVariable(enum.Enum):
    DELTA_S = "delta_s"
    DELTA_D = "delta_d"
    CHI = "chi"
    OMEGA_S0 = "omega_s0"
    OMEGA_D0 = "omega_d0"


@dataclass(frozen=True)
class DriveRecipe:
    """Per-realization drive construction rule.

    The lower-transition field is chaotic (colored noise with the given PSD),
    a phase-diffusion field of linewidth ``pdm_linewidth``, or Fourier
    limited.  The upper-transition field, present whenever ``d_envelope`` is
    given, is always Fourier limited.
    """

    s_mode: FieldMode
    s_envelope: EnvelopeSpec
    t_final: float
    psd: PsdSpec | None = None
    pdm_linewidth: float | None = None
    d_envelope: EnvelopeSpec | None = None

    def __post_init__(self):
        if not isinstance(self.s_mode, FieldMode):
            object.__setattr__(self, "s_mode", FieldMode(self.s_mode))
        if not (self.t_final > 0.0):
            raise ConfigurationError(f"t_final must be positive, got {self.t_final}")
        if self.s_mode is FieldMode.CHAOTIC and self.psd is None:
            raise ConfigurationError("chaotic mode requires a PSD")
        if self.s_mode is FieldMode.PDM and not (
            self.pdm_linewidth is not None and self.pdm_linewidth > 0.0
        ):
            raise ConfigurationError("pdm mode requires a positive pdm_linewidth")


@dataclass(frozen=True)
class EnsembleConfig:
    """Realization count, master seed, and execution knobs.

    ``batch_size`` fixes the reduction partition and therefore the exact
    floating-point result; ``worker_count`` only distributes the batches
    (0 means one worker per CPU).
    """

    n_realizations: int = 5000
    master_seed: int = 0
    worker_count: int = 0
    batch_size: int = 250

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ConfigurationError(f"n_realizations must be >= 1, got {self.n_realizations}")
        if not (0 <= self.master_seed < _SEED_LIMIT):
            raise ConfigurationError("master_seed must fit in an unsigned 64-bit integer")
        if self.worker_count < 0:
            raise ConfigurationError(f"worker_count must be >= 0, got {self.worker_count}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ScanSpec:
    """A grid of values for one scan variable over a system/recipe template."""

    variable: ScanVariable
    grid: np.ndarray = field(repr=False)
    system: SystemSpec
    recipe: DriveRecipe

    def __post_init__(self):
        if not isinstance(self.variable, ScanVariable):
            object.__setattr__(self, "variable", ScanVariable(self.variable))
        g = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", g)
        if g.ndim != 1 or g.size == 0:
            raise ConfigurationError("scan grid must be a non-empty 1-D array")
        if g.size > 1:
            d = np.diff(g)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ConfigurationError("scan grid must be strictly monotone")


@dataclass(frozen=True)
class PointResult:
    q2_mean: float
    q2_stderr: float
    q3_mean: float
    q3_stderr: float
    n_realizations: int


@dataclass(frozen=True)
class ScanResult:
    """Ensemble-averaged yields over a scan grid, with provenance."""

    variable: ScanVariable
    grid: np.ndarray = field(repr=False)
    q2_mean: np.ndarray = field(repr=False)
    q2_stderr: np.ndarray = field(repr=False)
    q3_mean: np.ndarray = field(repr=False)
    q3_stderr: np.ndarray = field(repr=False)
    n_realizations: np.ndarray = field(repr=False)
    ok: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict)

    def point(self, i: int) -> PointResult:
        return PointResult(
            q2_mean=float(self.q2_mean[i]),
            q2_stderr=float(self.q2_stderr[i]),
            q3_mean=float(self.q3_mean[i]),
            q3_stderr=float(self.q3_stderr[i]),
            n_realizations=int(self.n_realizations[i]),
        )


def stream_for(master_seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for one realization."""
    key = np.array([master_seed % _SEED_LIMIT, index % _SEED_LIMIT], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _pdm_grid_dt(gamma: float) -> float:
    # resolve both the decay scale and the phase diffusion (rms step <= 0.2 rad)
    return min(0.02, 0.04 / gamma)


def _batches(n: int, batch_size: int) -> list[tuple[int, int]]:
    return [(i, min(i + batch_size, n)) for i in range(0, n, batch_size)]


def _apply_scan_value(
    system: SystemSpec, recipe: DriveRecipe, variable: ScanVariable, value: float
) -> tuple[SystemSpec, DriveRecipe]:
    """Template + one grid value -> concrete (system, recipe) for that point."""
    if variable is ScanVariable.DELTA_S:
        return replace(system, delta_s=value), recipe
    if variable is ScanVariable.DELTA_D:
        return replace(system, delta_d=value), recipe
    if variable is ScanVariable.OMEGA_S0:
        return replace(system, omega_s0=value), recipe
    if variable is ScanVariable.OMEGA_D0:
        return replace(system, omega_d0=value), recipe
    # chi scan: reshape the noise to chi = sigma_omega * tau_s at fixed tau_s
    tau = recipe.s_envelope.tau
    sigma = value / tau
    if recipe.s_mode is FieldMode.CHAOTIC:
        return system, replace(recipe, psd=replace(recipe.psd, sigma_omega=sigma))
    if recipe.s_mode is FieldMode.PDM:
        gamma = 2.0 * math.sqrt(2.0 * math.log(2.0)) * sigma
        return system, replace(recipe, pdm_linewidth=gamma)
    raise ConfigurationError("chi scan requires a stochastic drive recipe")


def _modulation_block(
    recipe: DriveRecipe, system: SystemSpec, seed: int, lo: int, hi: int
) -> tuple[np.ndarray, float]:
    """Modulation traces zeta(t) for realizations [lo, hi); rows independent of batching."""
    if recipe.s_mode is FieldMode.CHAOTIC:
        grid = FrequencyGrid.for_spec(recipe.psd, recipe.t_final)
        rngs = [stream_for(seed, i) for i in range(lo, hi)]
        return sample_noise_block(recipe.psd, grid, rngs), grid.dt
    if recipe.s_mode is FieldMode.PDM:
        dt = _pdm_grid_dt(recipe.pdm_linewidth)
        rows = [
            pdm_modulation_trace(recipe.pdm_linewidth, stream_for(seed, i), dt, recipe.t_final).samples
            for i in range(lo, hi)
        ]
        return np.stack(rows), dt
    dt = default_step_target(system)
    n = int(np.ceil(recipe.t_final / dt - 1e-9)) + 1
    return np.ones((1, n), dtype=np.complex128), dt


def _integrate_block(
    deltas_s: np.ndarray,
    deltas_d: np.ndarray,
    system: SystemSpec,
    recipe: DriveRecipe,
    zeta: np.ndarray,
    dt: float,
):
    """Integrate all scan points for a block of realizations; returns (q2, q3, fail)."""
    om_s, om_d = sample_drive_block(
        system, recipe.s_envelope, recipe.t_final, zeta, dt, recipe.d_envelope
    )
    m = substeps_for(dt, system)
    n_int = int(np.ceil(recipe.t_final / dt - 1e-9))
    if system.levels == 2:
        _, _, _, q2, fail = _rk4_two(deltas_s, om_s, dt, m, n_int, system.gamma2)
        q3 = np.zeros_like(q2)
    else:
        if om_d is None:
            om_d = np.zeros(om_s.shape[1], dtype=np.float64)
        _, _, _, _, _, _, q2, q3, fail = _rk4_three(
            deltas_s, deltas_d, om_s, om_d, dt, m, n_int, system.gamma2, system.gamma3
        )
    return q2, q3, fail


def _run_task(args):
    """One work item: (task key, batch of realizations x all scan points) -> partial sums."""
    key, deltas_s, deltas_d, system, recipe, seed, lo, hi = args
    if recipe.s_mode is FieldMode.FOURIER:
        zeta, dt = _modulation_block(recipe, system, seed, 0, 1)
        n_done = 1
        first_index = 0
    else:
        zeta, dt = _modulation_block(recipe, system, seed, lo, hi)
        n_done = hi - lo
        first_index = lo
    q2, q3, fail = _integrate_block(deltas_s, deltas_d, system, recipe, zeta, dt)
    failed = fail != 0
    bad_first = np.full(q2.shape[0], -1, dtype=np.int64)
    for p in range(q2.shape[0]):
        bad = np.nonzero(failed[p])[0]
        if bad.size:
            bad_first[p] = first_index + int(bad[0])
    return (
        key,
        {
            "n": n_done,
            "sum_q2": q2.sum(axis=1),
            "sum_q2_sq": (q2 * q2).sum(axis=1),
            "sum_q3": q3.sum(axis=1),
            "sum_q3_sq": (q3 * q3).sum(axis=1),
            "bad_first": bad_first,
        },
    )


def _execute(tasks, worker_count: int):
    """Run tasks inline or on a process pool; returns {key: partial} regardless of order."""
    results = {}
    if worker_count == 1 or len(tasks) == 1:
        for t in tasks:
            key, partial = _run_task(t)
            results[key] = partial
        return results
    workers = worker_count if worker_count > 0 else (os.cpu_count() or 1)
    workers = min(workers, len(tasks))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for key, partial in pool.map(_run_task, tasks, chunksize=1):
            results[key] = partial
    return results


def _reduce_point_group(partials: list[dict]) -> dict:
    """Combine batch partials (already in batch order) into means and stderrs."""
    n = sum(p["n"] for p in partials)
    shape = partials[0]["sum_q2"].shape
    s_q2 = np.zeros(shape)
    s_q2sq = np.zeros(shape)
    s_q3 = np.zeros(shape)
    s_q3sq = np.zeros(shape)
    bad_first = np.full(shape, -1, dtype=np.int64)
    for p in partials:
        s_q2 += p["sum_q2"]
        s_q2sq += p["sum_q2_sq"]
        s_q3 += p["sum_q3"]
        s_q3sq += p["sum_q3_sq"]
        newly = (bad_first < 0) & (p["bad_first"] >= 0)
        bad_first[newly] = p["bad_first"][newly]
    mean_q2 = s_q2 / n
    mean_q3 = s_q3 / n
    if n > 1:
        var_q2 = np.maximum(s_q2sq - s_q2 * s_q2 / n, 0.0) / (n - 1)
        var_q3 = np.maximum(s_q3sq - s_q3 * s_q3 / n, 0.0) / (n - 1)
        se_q2 = np.sqrt(var_q2 / n)
        se_q3 = np.sqrt(var_q3 / n)
    else:
        se_q2 = np.zeros(shape)
        se_q3 = np.zeros(shape)
    return {
        "n": n,
        "q2_mean": mean_q2,
        "q2_stderr": se_q2,
        "q3_mean": mean_q3,
        "q3_stderr": se_q3,
        "bad_first": bad_first,
    }


def _digest(scan: ScanSpec, config: EnsembleConfig) -> str:
    text = repr((scan.variable, scan.grid.tolist(), scan.system, scan.recipe,
                 config.n_realizations, config.master_seed, config.batch_size))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_scan(scan: ScanSpec, config: EnsembleConfig) -> ScanResult:
    """Ensemble-average the yields over the scan grid.

    Grid points share the per-realization noise streams (the stream depends
    only on the master seed and the realization index), so detuning scans
    integrate every point against the same set of random pulses.  Failed
    points are flagged in ``ok`` and carry NaN means; the first failing
    realization index is recorded in the provenance.
    """
    grid = scan.grid
    n_pts = grid.size
    delta_groups: list[tuple] = []
    if scan.variable in (ScanVariable.DELTA_S, ScanVariable.DELTA_D):
        if scan.variable is ScanVariable.DELTA_S:
            ds, dd = grid.copy(), np.full(n_pts, scan.system.delta_d)
        else:
            ds, dd = np.full(n_pts, scan.system.delta_s), grid.copy()
        delta_groups.append(("all", ds, dd, scan.system, scan.recipe))
    else:
        for i, v in enumerate(grid):
            sys_i, rec_i = _apply_scan_value(scan.system, scan.recipe, scan.variable, float(v))
            delta_groups.append(
                (i, np.array([sys_i.delta_s]), np.array([sys_i.delta_d]), sys_i, rec_i)
            )

    tasks = []
    for key, ds, dd, sys_i, rec_i in delta_groups:
        if rec_i.s_mode is FieldMode.FOURIER:
            spans = [(0, 1)]
        else:
            spans = _batches(config.n_realizations, config.batch_size)
        for b, (lo, hi) in enumerate(spans):
            tasks.append(((key, b), ds, dd, sys_i, rec_i, config.master_seed, lo, hi))

    results = _execute(tasks, config.worker_count)

    q2_mean = np.full(n_pts, np.nan)
    q2_se = np.full(n_pts, np.nan)
    q3_mean = np.full(n_pts, np.nan)
    q3_se = np.full(n_pts, np.nan)
    n_real = np.zeros(n_pts, dtype=np.int64)
    ok = np.zeros(n_pts, dtype=bool)
    failures = {}

    for key, *_ in delta_groups:
        n_batches = sum(1 for k in results if k[0] == key)
        partials = [results[(key, b)] for b in range(n_batches)]
        red = _reduce_point_group(partials)
        idx = np.arange(n_pts) if key == "all" else np.array([key])
        for j, point in enumerate(idx):
            if red["bad_first"][j] >= 0:
                failures[int(point)] = int(red["bad_first"][j])
                continue
            q2_mean[point] = red["q2_mean"][j]
            q2_se[point] = red["q2_stderr"][j]
            q3_mean[point] = red["q3_mean"][j]
            q3_se[point] = red["q3_stderr"][j]
            n_real[point] = red["n"]
            ok[point] = True

    provenance = {
        "master_seed": config.master_seed,
        "n_realizations": config.n_realizations,
        "batch_size": config.batch_size,
        "config_digest": _digest(scan, config),
    }
    if failures:
        provenance["failed_points"] = failures
    return ScanResult(
        variable=scan.variable,
        grid=grid,
        q2_mean=q2_mean,
        q2_stderr=q2_se,
        q3_mean=q3_mean,
        q3_stderr=q3_se,
        n_realizations=n_real,
        ok=ok,
        provenance=provenance,
    )


def run_point(system: SystemSpec, recipe: DriveRecipe, config: EnsembleConfig) -> PointResult:
    """Ensemble-average the yields for a single parameter point.

    Equivalent to a one-point scan; raises IntegrationError (with the failing
    realization index) if any realization is unstable.
    """
    scan = ScanSpec(
        variable=ScanVariable.DELTA_S,
        grid=np.array([system.delta_s]),
        system=system,
        recipe=recipe,
    )
    res = run_scan(scan, config)
    if not res.ok[0]:
        raise IntegrationError(
            "realization failed to integrate",
            diagnostics={"failing_realization": res.provenance["failed_points"][0]},
        )
    return res.point(0)
