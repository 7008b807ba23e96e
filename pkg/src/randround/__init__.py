"""Random rounding and its failure modes on hierarchical count tables.

The package implements the mod-5 random rounding used to protect published
census counts, the four boundary conditions under which rounded partition
groups leak exact or near-exact true values, an exhaustive likelihood-weighted
solution enumerator, a Monte Carlo harness validating the closed-form attack
rates, and the discrete Laplace replacement mechanism with a utility
comparison.
"""

__version__ = "0.1.0"

from .mechanisms import (
    DiscreteLaplaceParams,
    MechanismSpec,
    apply_mechanism,
    dlap_pmf,
    dlap_sample,
    make_rng,
    rround_observation_prob,
    rround_pmf,
    rround_sample,
    true_value_bounds,
)
from .model import (
    HierarchySchema,
    PartitionGroup,
    RegionTable,
    SchemaError,
    TableError,
    parse_hierarchy,
    parse_table,
    validate_true_table,
)
from .enumerator import (
    CapExceeded,
    ChildSpec,
    GroupInstance,
    SolutionSpace,
    credible_interval,
    enumerate_solutions,
    marginals,
    top_k,
)
from .scanners import (
    Finding,
    FindingKind,
    scan_exact_invariant,
    scan_exact_invariant_free,
    scan_prob_invariant,
    scan_prob_invariant_free,
    scan_region,
    scan_region_report,
)
from .simulator import (
    TrialConfig,
    TrialReport,
    analytic_rate,
    expected_count,
    gen_group,
    run_trials,
)
from .utility import compare, dlap_expected_distance, rround_expected_distance

__all__ = [
    "__version__",
    "DiscreteLaplaceParams",
    "MechanismSpec",
    "apply_mechanism",
    "dlap_pmf",
    "dlap_sample",
    "make_rng",
    "rround_observation_prob",
    "rround_pmf",
    "rround_sample",
    "true_value_bounds",
    "HierarchySchema",
    "PartitionGroup",
    "RegionTable",
    "SchemaError",
    "TableError",
    "parse_hierarchy",
    "parse_table",
    "validate_true_table",
    "CapExceeded",
    "ChildSpec",
    "GroupInstance",
    "SolutionSpace",
    "credible_interval",
    "enumerate_solutions",
    "marginals",
    "top_k",
    "Finding",
    "FindingKind",
    "scan_exact_invariant",
    "scan_exact_invariant_free",
    "scan_prob_invariant",
    "scan_prob_invariant_free",
    "scan_region",
    "scan_region_report",
    "TrialConfig",
    "TrialReport",
    "analytic_rate",
    "expected_count",
    "gen_group",
    "run_trials",
    "compare",
    "dlap_expected_distance",
    "rround_expected_distance",
]
