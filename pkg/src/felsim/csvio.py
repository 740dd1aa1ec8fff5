"""CSV emission and re-reading with embedded provenance.

Every file starts with ``#``-prefixed comment lines carrying the artifact
version, the master seed, scan metadata, and a full echo of the run
configuration, followed by one header row.  Floats are written with 17
significant digits so files can serve as bit-exact regression references.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .ensemble import ScanResult, ScanVariable
from .errors import ConfigurationError

__all__ = [
    "format_float",
    "write_scan_csv",
    "read_scan_csv",
    "ScanTable",
    "scan_results_from_table",
    "write_features_csv",
    "write_rows_csv",
    "write_status_sidecar",
]


def format_float(x) -> str:
    return f"{float(x):.17g}"


def _provenance_lines(meta: dict, config_text: str | None) -> list[str]:
    lines = [f"# felsim {__version__}"]
    for key, value in meta.items():
        lines.append(f"# {key} = {value}")
    if config_text is not None:
        lines.append("# config_begin")
        for raw in config_text.rstrip("\n").splitlines():
            lines.append(f"# | {raw}")
        lines.append("# config_end")
    return lines


def write_rows_csv(path, columns, rows, meta: dict, config_text: str | None = None) -> None:
    """Write a generic provenance-carrying CSV; cell values are formatted per type."""
    out = _provenance_lines(meta, config_text)
    out.append(",".join(columns))
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(format_float(v))
        out.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def write_scan_csv(
    path,
    groups,
    config_text: str | None = None,
    extra_meta: dict | None = None,
    include_q3: bool | None = None,
) -> None:
    """Write scan results, one row per grid point.

    ``groups`` is a list of ``(sweep_values, ScanResult)`` pairs; all entries
    must share the same sweep keys and scan variable.  q3 columns appear only
    for three-level scans (inferred from the data unless forced).
    """
    if not groups:
        raise ConfigurationError("no scan results to write")
    sweep_keys = list(groups[0][0].keys())
    variable = groups[0][1].variable
    if include_q3 is None:
        include_q3 = any(
            np.nanmax(np.abs(res.q3_mean), initial=0.0) > 0.0 for _, res in groups
        )
    columns = sweep_keys + [variable.value, "q2_mean", "q2_stderr"]
    if include_q3:
        columns += ["q3_mean", "q3_stderr"]
    columns.append("n")

    rows = []
    for sweep_values, res in groups:
        if list(sweep_values.keys()) != sweep_keys or res.variable is not variable:
            raise ConfigurationError("inconsistent sweep keys or scan variable across groups")
        for i in range(res.grid.size):
            row = [sweep_values[k] for k in sweep_keys]
            row += [res.grid[i], res.q2_mean[i], res.q2_stderr[i]]
            if include_q3:
                row += [res.q3_mean[i], res.q3_stderr[i]]
            row.append(int(res.n_realizations[i]))
            rows.append(row)

    meta = {
        "scan_variable": variable.value,
        "sweep_keys": ",".join(sweep_keys) if sweep_keys else "-",
    }
    seeds = {res.provenance.get("master_seed") for _, res in groups}
    if len(seeds) == 1:
        meta["master_seed"] = seeds.pop()
    digests = [res.provenance.get("config_digest", "") for _, res in groups]
    meta["config_digest"] = ";".join(digests)
    if extra_meta:
        meta.update(extra_meta)
    write_rows_csv(path, columns, rows, meta, config_text)


@dataclass
class ScanTable:
    """Parsed scan CSV: metadata, column names, and per-column value lists."""

    meta: dict
    columns: list
    cells: list = field(repr=False)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.cells]


def read_scan_csv(path) -> ScanTable:
    meta: dict = {}
    columns: list[str] | None = None
    cells: list[list] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("|") or body.startswith("config"):
                    continue
                if " = " in body:
                    key, _, value = body.partition(" = ")
                    meta[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if columns is None:
                columns = [p.strip() for p in parts]
                continue
            row = []
            for p in parts:
                p = p.strip()
                try:
                    row.append(float(p))
                except ValueError:
                    row.append(p)
            cells.append(row)
    if columns is None:
        raise ConfigurationError(f"{path}: no header row found")
    return ScanTable(meta=meta, columns=columns, cells=cells)


def scan_results_from_table(table: ScanTable):
    """Rebuild ``(sweep_values, ScanResult)`` groups from a scan CSV.

    Grouping preserves file order; rows with n = 0 or non-finite means are
    flagged not-ok in the rebuilt result.
    """
    if "scan_variable" not in table.meta:
        raise ConfigurationError("CSV lacks the scan_variable metadata line")
    variable = ScanVariable(table.meta["scan_variable"])
    if variable.value not in table.columns:
        raise ConfigurationError(f"CSV lacks the scan column {variable.value!r}")
    x_col = table.columns.index(variable.value)
    sweep_keys = table.columns[:x_col]
    has_q3 = "q3_mean" in table.columns

    def col(name):
        return table.columns.index(name)

    groups: dict[tuple, dict] = {}
    order: list[tuple] = []
    for row in table.cells:
        key = tuple(row[:x_col])
        if key not in groups:
            groups[key] = {"x": [], "q2": [], "q2se": [], "q3": [], "q3se": [], "n": []}
            order.append(key)
        g = groups[key]
        g["x"].append(row[x_col])
        g["q2"].append(row[col("q2_mean")])
        g["q2se"].append(row[col("q2_stderr")])
        g["q3"].append(row[col("q3_mean")] if has_q3 else 0.0)
        g["q3se"].append(row[col("q3_stderr")] if has_q3 else 0.0)
        g["n"].append(int(row[col("n")]))
    out = []
    for key in order:
        g = groups[key]
        n = np.asarray(g["n"], dtype=np.int64)
        q2 = np.asarray(g["q2"], dtype=float)
        ok = (n > 0) & np.isfinite(q2)
        res = ScanResult(
            variable=variable,
            grid=np.asarray(g["x"], dtype=float),
            q2_mean=q2,
            q2_stderr=np.asarray(g["q2se"], dtype=float),
            q3_mean=np.asarray(g["q3"], dtype=float),
            q3_stderr=np.asarray(g["q3se"], dtype=float),
            n_realizations=n,
            ok=ok,
            provenance={k: v for k, v in table.meta.items() if k in ("master_seed", "config_digest")},
        )
        out.append((dict(zip(sweep_keys, key)), res))
    return out


def write_features_csv(path, groups, meta: dict, config_text: str | None = None) -> None:
    """Write extracted curve features, one row per input curve.

    ``groups`` is a list of ``(sweep_values, CurveFeatures)``; doublet fields
    are NaN where the doublet is absent.
    """
    if not groups:
        raise ConfigurationError("no features to write")
    sweep_keys = list(groups[0][0].keys())
    columns = sweep_keys + [
        "n_peaks",
        "peak1_position", "peak1_height", "peak1_fwhm",
        "peak2_position", "peak2_height", "peak2_fwhm",
        "separation", "depth",
        "lorentz_center", "lorentz_width", "lorentz_amplitude", "lorentz_residual",
    ]
    rows = []
    for sweep_values, f in groups:
        row = [sweep_values[k] for k in sweep_keys]
        if f.has_doublet:
            row += [2,
                    f.peak_positions[0], f.peak_heights[0], f.fwhm_per_peak[0],
                    f.peak_positions[1], f.peak_heights[1], f.fwhm_per_peak[1],
                    f.separation, f.depth]
        else:
            row += [1,
                    f.peak_positions[0], f.peak_heights[0], f.fwhm_per_peak[0],
                    np.nan, np.nan, np.nan, np.nan, np.nan]
        fit = f.lorentzian_fit
        if fit is not None:
            row += [fit.center, fit.width, fit.amplitude, fit.residual]
        else:
            row += [np.nan, np.nan, np.nan, np.nan]
        rows.append(row)
    write_rows_csv(path, columns, rows, meta, config_text)


def write_status_sidecar(out_path, status: str, detail: dict) -> str:
    """Write ``<out>.status.json`` describing a partial or failed run."""
    side = str(out_path) + ".status.json"
    with open(side, "w", encoding="utf-8") as fh:
        json.dump({"status": status, **detail}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return side
