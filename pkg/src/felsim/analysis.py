"""Feature extraction from yield-versus-detuning curves.

Covers the observables used to characterize single resonances and
Autler-Townes doublets: Lorentzian line fits, doublet peak positions and
separation, per-peak widths, and the doublet depth
``V = (max - min) / max``.

Functions accept a ScanResult (selecting the q2 or q3 signal) or a plain
``(x, y)`` / ``(x, y, stderr)`` tuple of arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .ensemble import ScanResult
from .errors import ConfigurationError, FitError, InsufficientDataError, ShapeError

__all__ = [
    "LorentzianFit",
    "CurveFeatures",
    "DoubletTrend",
    "FwhmTrend",
    "fit_lorentzian",
    "extract_doublet",
    "splitting_vs_chi",
    "fwhm_vs_chi",
]


@dataclass(frozen=True)
class LorentzianFit:
    """Fitted parameters; residual is the RMS deviation over the curve's peak height."""

    center: float
    width: float
    amplitude: float
    residual: float


@dataclass(frozen=True)
class CurveFeatures:
    """Peaks and doublet observables of one scan curve.

    For a resolved doublet the tuples hold (left peak, right peak) and
    ``separation``/``depth`` are set; otherwise they describe the single
    dominant peak and the doublet fields are None.
    """

    peak_positions: tuple
    peak_heights: tuple
    separation: float | None
    fwhm_per_peak: tuple
    depth: float | None
    lorentzian_fit: LorentzianFit | None = None

    @property
    def has_doublet(self) -> bool:
        return self.separation is not None


def _as_xy(curve, signal: str = "q2"):
    """Normalize input to (x, y, stderr-or-None), dropping failed points."""
    if isinstance(curve, ScanResult):
        if signal not in ("q2", "q3"):
            raise ConfigurationError(f"signal must be 'q2' or 'q3', got {signal!r}")
        mask = curve.ok
        x = curve.grid[mask]
        y = (curve.q2_mean if signal == "q2" else curve.q3_mean)[mask]
        se = (curve.q2_stderr if signal == "q2" else curve.q3_stderr)[mask]
        return x, y, se
    if len(curve) == 2:
        x, y = curve
        se = None
    else:
        x, y, se = curve
        se = None if se is None else np.asarray(se, dtype=float)
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float), se


def _noise_floor(se) -> float:
    if se is None:
        return 0.0
    se = se[np.isfinite(se)]
    return 3.0 * float(np.mean(se)) if se.size else 0.0


def _local_maxima(y: np.ndarray) -> list[int]:
    return [i for i in range(1, y.size - 1) if y[i] > y[i - 1] and y[i] > y[i + 1]]


def _parabolic_peak(x: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    """Vertex of the parabola through the three points around a grid maximum."""
    if i <= 0 or i >= y.size - 1:
        return float(x[i]), float(y[i])
    x0, x1, x2 = x[i - 1], x[i], x[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    if a >= 0.0:
        return float(x1), float(y1)
    xv = -b / (2.0 * a)
    c = y1 - a * x1 * x1 - b * x1
    return float(xv), float(a * xv * xv + b * xv + c)


def _crossing(x, y, i_start: int, level: float, step: int) -> float:
    """Abscissa where y crosses ``level`` walking from i_start in direction step."""
    i = i_start
    while 0 <= i + step < y.size:
        j = i + step
        if (y[i] - level) * (y[j] - level) <= 0.0 and y[i] != y[j]:
            return float(x[i] + (level - y[i]) / (y[j] - y[i]) * (x[j] - x[i]))
        i = j
    return math.nan


def _single_peak_features(x, y, fit: LorentzianFit | None = None) -> CurveFeatures:
    i = int(np.argmax(y))
    pos, height = _parabolic_peak(x, y, i)
    half = 0.5 * height
    left = _crossing(x, y, i, half, -1)
    right = _crossing(x, y, i, half, +1)
    fwhm = right - left
    return CurveFeatures(
        peak_positions=(pos,),
        peak_heights=(height,),
        separation=None,
        fwhm_per_peak=(float(fwhm),),
        depth=None,
        lorentzian_fit=fit,
    )


def extract_doublet(curve, signal: str = "q2", smooth: bool = False) -> CurveFeatures:
    """Locate the two dominant peaks and their separation, widths, and depth.

    Peak positions are refined by parabolic interpolation.  A doublet is
    reported only when both peaks rise above the inter-peak minimum by more
    than three mean standard errors (the noise floor); otherwise the features
    of the single dominant peak are returned with the doublet fields unset,
    which is the meaningful "doublet has collapsed" outcome.

    Per-peak FWHM convention: twice the distance from the interpolated peak
    position to the outer-flank crossing of half the peak height (zero
    baseline).  The outer flank is unaffected by how much the inter-peak
    valley has filled in, so widths of overlapping and of isolated peaks are
    directly comparable.
    """
    x, y, se = _as_xy(curve, signal)
    if x.size < 5:
        raise InsufficientDataError("need at least 5 grid points")
    if smooth:
        ys = y.copy()
        ys[1:-1] = (y[:-2] + y[1:-1] + y[2:]) / 3.0
        y = ys
    floor = _noise_floor(se)
    maxima = _local_maxima(y)
    if len(maxima) < 2:
        return _single_peak_features(x, y)
    # two dominant peaks by height; ties broken toward smaller |x|
    ranked = sorted(maxima, key=lambda i: (-y[i], abs(x[i])))
    i_a, i_b = sorted(ranked[:2])
    i_min = i_a + int(np.argmin(y[i_a : i_b + 1]))
    v_min = float(y[i_min])
    if (y[i_a] - v_min) <= floor or (y[i_b] - v_min) <= floor:
        return _single_peak_features(x, y)

    pos_a, h_a = _parabolic_peak(x, y, i_a)
    pos_b, h_b = _parabolic_peak(x, y, i_b)
    widths = []
    for i, pos, h, outer_step in ((i_a, pos_a, h_a, -1), (i_b, pos_b, h_b, +1)):
        outer = _crossing(x, y, i, 0.5 * h, outer_step)
        widths.append(2.0 * abs(pos - outer) if not math.isnan(outer) else math.nan)
    h_max = max(h_a, h_b)
    return CurveFeatures(
        peak_positions=(pos_a, pos_b),
        peak_heights=(h_a, h_b),
        separation=float(pos_b - pos_a),
        fwhm_per_peak=tuple(widths),
        depth=float((h_max - v_min) / h_max),
    )


def _lorentzian(params, x):
    c, w, a = params
    hw2 = (0.5 * w) ** 2
    return a * hw2 / ((x - c) ** 2 + hw2)


def fit_lorentzian(curve, signal: str = "q2") -> LorentzianFit:
    """Least-squares Lorentzian fit of a single-peaked curve.

    Damped least squares from (peak position, FWHM estimate, peak height),
    at most 200 evaluations, relative tolerance 1e-10.  Raises ShapeError on
    bimodal input and FitError if the optimizer does not converge.  The
    returned residual is the RMS misfit divided by the curve maximum.
    """
    x, y, se = _as_xy(curve, signal)
    if x.size < 5:
        raise InsufficientDataError("need at least 5 grid points")
    floor = _noise_floor(se)
    maxima = _local_maxima(y)
    if len(maxima) >= 2:
        ranked = sorted(maxima, key=lambda i: (-y[i], abs(x[i])))
        i_a, i_b = sorted(ranked[:2])
        v_min = float(np.min(y[i_a : i_b + 1]))
        if (y[i_a] - v_min) > floor and (y[i_b] - v_min) > floor:
            raise ShapeError("curve is bimodal; Lorentzian fit requires a single peak")

    i_pk = int(np.argmax(y))
    pos, height = _parabolic_peak(x, y, i_pk)
    half = 0.5 * height
    left = _crossing(x, y, i_pk, half, -1)
    right = _crossing(x, y, i_pk, half, +1)
    if math.isnan(left) or math.isnan(right):
        w0 = (x[-1] - x[0]) / 4.0
    else:
        w0 = right - left
    res = least_squares(
        lambda p: _lorentzian(p, x) - y,
        x0=[pos, w0, height],
        method="lm",
        xtol=1e-10,
        ftol=1e-10,
        max_nfev=200,
    )
    if not res.success:
        raise FitError(f"Lorentzian fit did not converge: {res.message}")
    c, w, a = res.x
    rms = math.sqrt(float(np.mean((res.fun) ** 2)))
    return LorentzianFit(
        center=float(c), width=float(abs(w)), amplitude=float(a), residual=rms / float(y.max())
    )


@dataclass(frozen=True)
class DoubletTrend:
    """Splitting (normalized to a reference) and depth across a chi grid."""

    chi: np.ndarray
    normalized_splitting: np.ndarray
    depth: np.ndarray


def splitting_vs_chi(chis, curves, reference_separation: float, signal: str = "q2") -> DoubletTrend:
    """Doublet separation (normalized to the Fourier-limited value) and depth per chi.

    Entries where the doublet has collapsed are NaN.  Requires a resolvable
    doublet at the smallest chi.
    """
    chis = np.asarray(chis, dtype=float)
    if chis.size != len(curves):
        raise ConfigurationError("chis and curves must have equal length")
    if not (reference_separation > 0.0):
        raise ConfigurationError("reference_separation must be positive")
    sep = np.full(chis.size, np.nan)
    dep = np.full(chis.size, np.nan)
    order = np.argsort(chis)
    for k, i in enumerate(order):
        feats = extract_doublet(curves[i], signal=signal)
        if feats.has_doublet:
            sep[i] = feats.separation / reference_separation
            dep[i] = feats.depth
        elif k == 0:
            raise ShapeError(f"doublet not resolvable at the smallest chi ({chis[i]})")
    return DoubletTrend(chi=chis, normalized_splitting=sep, depth=dep)


@dataclass(frozen=True)
class FwhmTrend:
    """Mean per-peak FWHM versus chi with its ordinary-least-squares line."""

    chi: np.ndarray
    mean_fwhm: np.ndarray
    slope: float
    intercept: float
    r_squared: float


def fwhm_vs_chi(chis, curves, signal: str = "q2") -> FwhmTrend:
    """Mean doublet-peak FWHM per chi and a linear fit across the grid.

    Points without a resolvable doublet are excluded; at least 4 resolvable
    points are required for the fit.
    """
    chis = np.asarray(chis, dtype=float)
    if chis.size != len(curves):
        raise ConfigurationError("chis and curves must have equal length")
    fwhm = np.full(chis.size, np.nan)
    for i in range(chis.size):
        feats = extract_doublet(curves[i], signal=signal)
        if feats.has_doublet and np.all(np.isfinite(feats.fwhm_per_peak)):
            fwhm[i] = 0.5 * (feats.fwhm_per_peak[0] + feats.fwhm_per_peak[1])
    good = np.isfinite(fwhm)
    if good.sum() < 4:
        raise InsufficientDataError(
            f"need at least 4 resolvable doublets for a linear fit, have {int(good.sum())}"
        )
    slope, intercept = np.polyfit(chis[good], fwhm[good], 1)
    pred = slope * chis[good] + intercept
    ss_res = float(np.sum((fwhm[good] - pred) ** 2))
    ss_tot = float(np.sum((fwhm[good] - fwhm[good].mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FwhmTrend(
        chi=chis, mean_fwhm=fwhm, slope=float(slope), intercept=float(intercept), r_squared=r2
    )
