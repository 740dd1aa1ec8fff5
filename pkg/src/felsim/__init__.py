"""Simulation toolkit for chaotic SASE-FEL pulses driving single and double Auger resonances.

Synthesizes statistically faithful stochastic pulses (colored complex-Gaussian
noise under a deterministic envelope), validates their chaotic-light
statistics, integrates the stochastic density-matrix equations for two- and
three-level systems, and reduces Monte Carlo ensembles to Auger-yield curves
versus detuning.  All quantities are expressed in units of the core-hole
width Gamma_2.
"""

from .analysis import (
    CurveFeatures,
    DoubletTrend,
    FwhmTrend,
    LorentzianFit,
    extract_doublet,
    fit_lorentzian,
    fwhm_vs_chi,
    splitting_vs_chi,
)
from .dynamics import (
    DensityState,
    DressedStates,
    DriveTraces,
    SystemSpec,
    build_drive,
    dressed_eigensystem,
    integrate_three_level,
    integrate_two_level,
)
from .ensemble import (
    DriveRecipe,
    EnsembleConfig,
    FieldMode,
    PointResult,
    ScanResult,
    ScanSpec,
    ScanVariable,
    run_point,
    run_scan,
    stream_for,
)
from .errors import (
    ConfigurationError,
    FitError,
    InsufficientDataError,
    IntegrationError,
    ShapeError,
)
from .noise import (
    FrequencyGrid,
    NoiseTrace,
    PsdKind,
    PsdSpec,
    coherence_time,
    empirical_g1,
    noise_bandwidth,
    psd_value,
    sample_noise,
    theoretical_g1,
)
from .pulse import (
    EnvelopeKind,
    EnvelopeSpec,
    EsdResult,
    PulseStats,
    StochasticPulse,
    bandwidth_formula,
    chi_parameter,
    energy_spectral_density,
    envelope_eval,
    fourier_limited_bandwidth,
    intensity_moment_ratios,
    intensity_pdf_check,
    make_pdm_pulse,
    make_pulse,
    pulse_energy_stats,
    pulse_statistics,
)

__version__ = "0.1.0"
