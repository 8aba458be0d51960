"""obslab: coefficient recovery for 1D wave, beam and heat equations from
boundary observations, with observability constants, Volterra deconvolution,
damped-operator Riesz bases and logarithmic-stability sweeps."""

from .grid import (
    CoefficientField,
    Grid1D,
    GridMismatchError,
    TimeGrid,
    inner_l2,
    norm,
    weak_norm_star,
)
from .spectral import (
    PairingAmbiguityError,
    PerturbationBudget,
    PerturbationTooLarge,
    RieszBasisData,
    SpectralBasis,
    beam_eigenpairs,
    dirichlet_eigenpairs,
    gap_statistics,
    perturbation_budget,
    perturbed_spectrum,
    weyl_check,
)
from .forward import (
    IBOperatorMatrix,
    ObservationConfig,
    SolveResult,
    TraceSignal,
    assemble_ib_operator,
    heat_shift_identity_check,
    operator_norm,
    solve_beam,
    solve_heat,
    solve_wave,
)
from .volterra import (
    ModulationSignal,
    NotInvertibleError,
    RankDeficientError,
    SourceRecovery,
    apply_S,
    deconvolve,
    recover_source,
    theoretical_lower_bound,
)
from .observability import (
    ObservabilityEstimate,
    estimate_kappa,
    perturbation_margin_check,
)
from .reconstruct import (
    ProbeResult,
    ProbeSession,
    ReconstructionReport,
    StabilityTable,
    TruncationPlan,
    choose_truncation,
    probe_coefficient,
    reconstruct_field,
    stability_curve,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
