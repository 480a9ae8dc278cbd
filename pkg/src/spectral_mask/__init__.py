"""Statistics of randomly subsampled DFT coefficients of Bernoulli masks.

Layers: an exact 2^N enumeration oracle, a seeded streaming Monte Carlo
engine, and a closed-form library of moment identities, concentration
bounds and sub-Gaussian norm bounds, with machine-checkable domination and
identity tests between the three.
"""

from .bounds import (
    BoundQuery,
    CrossoverKind,
    CrossoverVerdict,
    McDiarmidCoefficients,
    PSI2_UPPER_COEFFICIENT,
    binomial_pmf,
    crossover_region,
    diff_binomial_pmf,
    exp_moment_bound,
    mcdiarmid_bound,
    moment_bound,
    psi2_sup_upper,
    psi2_upper,
    q_function,
    q_sandwich,
    tail_bound_combined,
    tail_bound_entropy,
    tail_bound_mod,
    tail_bound_q,
    tail_bound_uv,
    variance_formula,
)
from .errors import (
    CapabilityError,
    HypothesisViolationError,
    ParameterDomainError,
    QueryError,
    SpectralMaskError,
)
from .model import (
    FormKind,
    ModelParams,
    Part,
    SpecialForm,
    SupportMask,
    VALUE_GROUPING_TOL,
    dft_atom,
    evaluate,
    sample_mask,
    special_form,
    trig_sums,
)
from .montecarlo import (
    Accumulator,
    CIMethod,
    EstimateWithCI,
    McConfig,
    McQueries,
    RNG_ALGORITHM,
    mc_exp_moment,
    mc_moment,
    mc_psi2,
    mc_run,
    mc_tail,
    merge,
    merge_tree,
    snapshot,
)
from .oracle import (
    DEFAULT_ENUM_GUARD,
    ExactDistribution,
    HARD_ENUM_CAP,
    Psi2Definition,
    Psi2Estimate,
    enumerate_distribution,
    exact_exp_moment,
    exact_moment,
    exact_psi2_moment_norm,
    exact_psi2_norm,
    exact_tail,
    exact_tail_curve,
    weight_table,
)

__version__ = "0.1.0"

__all__ = [
    "Accumulator",
    "BoundQuery",
    "CIMethod",
    "CapabilityError",
    "CrossoverKind",
    "CrossoverVerdict",
    "DEFAULT_ENUM_GUARD",
    "EstimateWithCI",
    "ExactDistribution",
    "FormKind",
    "HARD_ENUM_CAP",
    "HypothesisViolationError",
    "McConfig",
    "McDiarmidCoefficients",
    "McQueries",
    "ModelParams",
    "PSI2_UPPER_COEFFICIENT",
    "ParameterDomainError",
    "Part",
    "Psi2Definition",
    "Psi2Estimate",
    "QueryError",
    "RNG_ALGORITHM",
    "SpecialForm",
    "SpectralMaskError",
    "SupportMask",
    "VALUE_GROUPING_TOL",
    "binomial_pmf",
    "crossover_region",
    "dft_atom",
    "diff_binomial_pmf",
    "enumerate_distribution",
    "evaluate",
    "exact_exp_moment",
    "exact_moment",
    "exact_psi2_moment_norm",
    "exact_psi2_norm",
    "exact_tail",
    "exact_tail_curve",
    "exp_moment_bound",
    "mc_exp_moment",
    "mc_moment",
    "mc_psi2",
    "mc_run",
    "mc_tail",
    "mcdiarmid_bound",
    "merge",
    "merge_tree",
    "moment_bound",
    "psi2_sup_upper",
    "psi2_upper",
    "q_function",
    "q_sandwich",
    "sample_mask",
    "snapshot",
    "special_form",
    "tail_bound_combined",
    "tail_bound_entropy",
    "tail_bound_mod",
    "tail_bound_q",
    "tail_bound_uv",
    "trig_sums",
    "variance_formula",
    "weight_table",
]
