"""Numerical laboratory for discrete Schrodinger operators with sparse potentials."""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigurationError,
    GeometryError,
    NoBoundStateError,
    RegularityError,
    ResonanceError,
    SolverError,
    SparselatError,
    SpectralParameterError,
    WavefrontError,
)
from .lattice import (
    LatticeBox,
    LatticeField,
    Potential,
    SparseRule,
    apply_h,
    apply_h0,
    sample_potential,
    short_range_partial_sums,
    sparse_support,
    sparseness_margin,
    support_gaps,
    symbol_eval,
)
from .green import (
    DecayFit,
    GreenKernel,
    coupling_bound,
    green_decay_fit,
    green_diag,
    green_eval,
    green_eval_many,
    spectral_distance,
)
from .hamlab import BoxOperator, eigs_in_window, participation_ratio, stieltjes
from .scattering import (
    PowerLawFit,
    ProbeResult,
    QIntegralSpec,
    free_propagate,
    full_propagate,
    power_law_fit,
    probe_spec_variants,
    q_decay_fit,
    q_integral,
    wave_operator_probe,
)
from .localization import (
    BumpCompareReport,
    SimonWolffReport,
    SpectrumFillReport,
    SupportKernel,
    SWThresholds,
    build_support_kernel,
    bump_measure_compare,
    impurity_level,
    kernel_singularities,
    one_plus_gv_scan,
    rejection_sample_lambdas,
    schur_bound,
    simon_wolff_resolve,
    site_factor,
    spectrum_fill_scan,
)
