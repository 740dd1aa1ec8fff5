"""Command-line entry points.

Subcommands:
  pulse-stats   generate a pulse ensemble and emit its statistics CSVs
  single-scan   two-level yield versus detuning (ensemble-averaged)
  dr-scan       three-level double-resonance yields versus detuning
  analyze       extract peaks/doublet features from a scan CSV
  presets       list (or print) the bundled run configurations

Exit codes: 0 success, 1 runtime/module error, 2 configuration error,
3 completed with partial results (see the ``.status.json`` sidecar).
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import extract_doublet, fit_lorentzian
from .config import ConfigError, RunConfig, parse_config_file
from .csvio import (
    read_scan_csv,
    scan_results_from_table,
    write_features_csv,
    write_rows_csv,
    write_scan_csv,
    write_status_sidecar,
)
from .ensemble import run_scan, stream_for
from .errors import ConfigurationError, FitError, IntegrationError, ShapeError
from .noise import (
    FrequencyGrid,
    NoiseTrace,
    coherence_time,
    empirical_g1_curve,
    sample_noise_block,
    theoretical_g1,
)
from .pulse import (
    bandwidth_formula,
    energy_gamma_check,
    energy_spectral_density,
    envelope_eval,
    intensity_moment_ratios,
    make_pulse,
    make_pdm_pulse,
    pulse_energy_stats,
)

_WORKERS_ENV = "FELSIM_WORKERS"

# Optional physical calibrations of the gamma2 unit for output annotation.
# kr-3d5p: a 83 meV Auger width, i.e. a lifetime of about 8 fs.
_UNIT_CALIBRATIONS = {
    "kr-3d5p": {
        "units_resonance": "kr-3d5p",
        "units_gamma2_mev": 83.0,
        "units_time_fs_per_inverse_gamma2": 658.2119569509067 / 83.0,
    }
}


def _unit_meta(args) -> dict:
    if getattr(args, "units", None) is None:
        return {}
    return dict(_UNIT_CALIBRATIONS[args.units])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="felsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"felsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_args(p):
        p.add_argument("--config", required=True, help="path to the run configuration file")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--realizations", type=int, default=None,
                       help="override the realization count")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (fallback: ${_WORKERS_ENV}, then config)")
        p.add_argument("--units", choices=sorted(_UNIT_CALIBRATIONS), default=None,
                       help="annotate outputs with a physical calibration of gamma2 "
                            "(computation always stays in gamma2 units)")

    p = sub.add_parser("pulse-stats", help="pulse-ensemble statistics CSVs")
    add_run_args(p)

    p = sub.add_parser("single-scan", help="single-resonance yield scan")
    add_run_args(p)

    p = sub.add_parser("dr-scan", help="double-resonance yield scan")
    add_run_args(p)

    p = sub.add_parser("analyze", help="extract curve features from a scan CSV")
    p.add_argument("input", help="scan CSV produced by single-scan or dr-scan")
    p.add_argument("--out", required=True, help="features CSV path")
    p.add_argument("--signal", choices=("q2", "q3"), default=None,
                   help="which yield to analyze (default: q3 for delta_d scans, else q2)")

    p = sub.add_parser("presets", help="list bundled figure-reproduction configs")
    p.add_argument("--show", metavar="NAME", default=None, help="print one preset")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        if not (0 <= args.seed < 1 << 64):
            raise ConfigurationError("--seed must be an unsigned 64-bit integer")
        cfg.master_seed = args.seed
    if args.realizations is not None:
        if args.realizations < 1:
            raise ConfigurationError("--realizations must be >= 1")
        cfg.n_realizations = args.realizations
    if args.workers is not None:
        workers = args.workers
    elif os.environ.get(_WORKERS_ENV):
        try:
            workers = int(os.environ[_WORKERS_ENV])
        except ValueError:
            raise ConfigurationError(f"${_WORKERS_ENV} must be an integer") from None
    else:
        workers = cfg.worker_count
    if workers < 0:
        raise ConfigurationError("worker count must be >= 0")
    cfg.worker_count = workers
    return cfg


def _sweep_combos(cfg: RunConfig):
    """Cartesian product of the sweep lists; yields (values dict, derived RunConfig)."""
    if not cfg.sweeps:
        yield {}, cfg
        return
    names = list(cfg.sweeps.keys())
    for combo in itertools.product(*(cfg.sweeps[n] for n in names)):
        values = dict(zip(names, combo))
        derived = RunConfig(**{**cfg.__dict__})
        derived.sweeps = {}
        derived.warnings = list(cfg.warnings)
        for name, value in values.items():
            if name == "chi":
                derived.chi, derived.sigma_omega = float(value), None
            elif name == "sigma_omega":
                derived.sigma_omega, derived.chi = float(value), None
            elif name == "omega_s0":
                derived.omega_s0 = float(value)
            elif name == "omega_d0":
                derived.omega_d0 = float(value)
            elif name == "tau_s":
                derived.tau_s = float(value)
            elif name == "noise_kind":
                derived.noise_kind = value
        yield values, derived


def _run_scan_command(args, levels: int) -> int:
    cfg = _apply_overrides(parse_config_file(args.config), args)
    config_text = Path(args.config).read_text(encoding="utf-8")
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if cfg.levels != levels:
        raise ConfigurationError(
            f"this subcommand requires [system].levels = {levels}, config has {cfg.levels}"
        )
    if cfg.scan_variable is None or cfg.scan_grid is None:
        raise ConfigurationError("[scan].variable and [scan].grid are required for scans")

    groups = []
    failed_points = {}
    for sweep_values, derived in _sweep_combos(cfg):
        res = run_scan(derived.scan(), derived.ensemble())
        groups.append((sweep_values, res))
        if "failed_points" in res.provenance:
            key = ",".join(f"{k}={v}" for k, v in sweep_values.items()) or "-"
            failed_points[key] = res.provenance["failed_points"]

    write_scan_csv(
        args.out,
        groups,
        config_text=config_text,
        extra_meta={
            "master_seed": cfg.master_seed,
            "n_realizations": cfg.n_realizations,
            **_unit_meta(args),
        },
        include_q3=(levels == 3),
    )
    print(f"wrote {args.out}")
    if failed_points:
        side = write_status_sidecar(args.out, "partial", {"failed_points": failed_points})
        print(f"warning: some points failed to integrate; see {side}", file=sys.stderr)
        return 3
    return 0


def _make_pulses(cfg: RunConfig, n: int):
    """Pulse ensemble for the configured noise kind, one stream per realization."""
    env = cfg.s_envelope()
    if cfg.noise_kind == "none":
        dt = 0.02
        steps = int(np.ceil(cfg.t_final / dt - 1e-9)) + 1
        ones = NoiseTrace(samples=np.ones(steps, dtype=complex), dt=dt)
        pulse = make_pulse(env, 1.0, ones)
        return [pulse, pulse], None
    if cfg.noise_kind == "pdm":
        gamma = 2.0 * np.sqrt(2.0 * np.log(2.0)) * cfg.sigma_omega_value()
        dt = min(0.02, 0.04 / gamma)
        pulses = [
            make_pdm_pulse(env, 1.0, gamma, stream_for(cfg.master_seed, i), dt, cfg.t_final)
            for i in range(n)
        ]
        return pulses, None
    psd = cfg.recipe().psd
    grid = FrequencyGrid.for_spec(psd, cfg.t_final)
    pulses = []
    traces = []
    block = 512
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        zeta = sample_noise_block(psd, grid, [stream_for(cfg.master_seed, i) for i in range(lo, hi)])
        traces.append(zeta)
        for row in zeta:
            pulses.append(make_pulse(env, 1.0, NoiseTrace(samples=row, dt=grid.dt)))
    return pulses, (np.vstack(traces), grid.dt, psd)


def _run_pulse_stats(args) -> int:
    cfg = _apply_overrides(parse_config_file(args.config), args)
    config_text = Path(args.config).read_text(encoding="utf-8")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    # the headline statistics describe the base configuration; when the noise
    # parameters come only from sweep lists, the first combination is the base
    base_values, base = next(_sweep_combos(cfg))
    meta = {"master_seed": cfg.master_seed, "n_realizations": cfg.n_realizations}
    meta.update(_unit_meta(args))
    if base_values:
        meta["base_case"] = ";".join(f"{k}={v}" for k, v in base_values.items())

    pulses, noise_info = _make_pulses(base, base.n_realizations)
    env = base.s_envelope()
    dt = pulses[0].dt
    t = pulses[0].times()

    profile = np.mean(np.stack([p.intensity() for p in pulses]), axis=0)
    write_rows_csv(
        out_dir / "profile.csv",
        ["t", "mean_intensity", "envelope"],
        [(ti, pi, float(envelope_eval(env, ti))) for ti, pi in zip(t, profile)],
        meta, config_text,
    )

    t0 = env.t0 if env.kind.value != "flat" else env.t0 + 0.5 * env.tau
    sample_times = [t0 - 0.5 * base.tau_s, t0, t0 + 0.5 * base.tau_s]
    kept, ratios = intensity_moment_ratios(pulses, sample_times, r_max=5)
    mom_rows = []
    for i, ti in enumerate(kept):
        for r in range(1, 6):
            mom_rows.append((ti, r, ratios[i, r - 1]))
    write_rows_csv(out_dir / "moments.csv", ["t", "r", "ratio"], mom_rows, meta, config_text)

    energies, m = pulse_energy_stats(pulses)
    gamma_dev = energy_gamma_check(energies, m) if energies.size >= 2 and np.var(energies) > 0 else np.nan
    write_rows_csv(
        out_dir / "energy.csv",
        ["n", "mean_energy", "std_energy", "m_parameter", "gamma_cdf_deviation"],
        [(len(energies), float(np.mean(energies)), float(np.std(energies, ddof=1)), m, gamma_dev)],
        meta, config_text,
    )

    esd = energy_spectral_density(pulses)
    esd_rows = [("base", base.noise_kind, esd.fwhm,
                 bandwidth_formula(base.tau_s, base.sigma_omega_value())
                 if base.noise_kind != "none" else bandwidth_formula(base.tau_s, 0.0))]
    for sweep_values, derived in _sweep_combos(cfg):
        if not sweep_values:
            continue
        swept_pulses, _ = _make_pulses(derived, derived.n_realizations)
        swept = energy_spectral_density(swept_pulses)
        label = ";".join(f"{k}={v}" for k, v in sweep_values.items())
        formula = bandwidth_formula(
            derived.tau_s,
            derived.sigma_omega_value() if derived.noise_kind != "none" else 0.0,
        )
        esd_rows.append((label, derived.noise_kind, swept.fwhm, formula))
    write_rows_csv(
        out_dir / "esd.csv",
        ["case", "noise_kind", "fwhm", "gaussian_formula_fwhm"],
        esd_rows, meta, config_text,
    )
    write_rows_csv(
        out_dir / "spectrum.csv",
        ["omega", "esd"],
        list(zip(esd.omega, esd.esd)),
        meta, config_text,
    )

    if noise_info is not None:
        zeta, ndt, psd = noise_info
        tc = coherence_time(psd)
        lags = np.unique(np.round(np.linspace(0.0, 3.0 * tc, 25) / ndt).astype(int))
        g, se = empirical_g1_curve(zeta, ndt, lags)
        rows = [
            (k * ndt, g[i], se[i], float(theoretical_g1(psd, k * ndt)))
            for i, k in enumerate(lags)
        ]
        write_rows_csv(out_dir / "g1.csv", ["v", "empirical", "stderr", "theory"],
                       rows, meta, config_text)

    print(f"wrote statistics CSVs to {out_dir}")
    return 0


def _run_analyze(args) -> int:
    table = read_scan_csv(args.input)
    groups = scan_results_from_table(table)
    signal = args.signal
    if signal is None:
        signal = "q3" if table.meta.get("scan_variable") == "delta_d" and "q3_mean" in table.columns else "q2"
    out_groups = []
    for sweep_values, res in groups:
        feats = extract_doublet(res, signal=signal)
        if not feats.has_doublet:
            try:
                feats = replace(feats, lorentzian_fit=fit_lorentzian(res, signal=signal))
            except (ShapeError, FitError, ConfigurationError):
                pass
        out_groups.append((sweep_values, feats))
    meta = {"source": str(args.input), "signal": signal}
    meta.update({k: v for k, v in table.meta.items() if k in ("master_seed", "config_digest")})
    write_features_csv(args.out, out_groups, meta)
    print(f"wrote {args.out}")
    return 0


def _preset_files():
    root = resources.files("felsim") / "presets"
    return sorted(p for p in root.iterdir() if p.name.endswith(".ini"))


def _run_presets(args) -> int:
    if args.show is not None:
        name = args.show if args.show.endswith(".ini") else args.show + ".ini"
        for p in _preset_files():
            if p.name == name:
                sys.stdout.write(p.read_text(encoding="utf-8"))
                return 0
        raise ConfigurationError(f"no preset named {args.show!r}")
    for p in _preset_files():
        first = p.read_text(encoding="utf-8").splitlines()[0].lstrip("# ").strip()
        print(f"{p.name:40s} {first}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "pulse-stats":
            return _run_pulse_stats(args)
        if args.command == "single-scan":
            return _run_scan_command(args, levels=2)
        if args.command == "dr-scan":
            return _run_scan_command(args, levels=3)
        if args.command == "analyze":
            return _run_analyze(args)
        if args.command == "presets":
            return _run_presets(args)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, FitError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
