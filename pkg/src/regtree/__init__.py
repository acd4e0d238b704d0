"""Eigenvalue counting for symmetric Schrödinger operators on rooted metric trees."""

from .errors import (BadTruncation, EigenvalueAtThreshold, InvalidSequence, MeshTooCoarse,
                     MultiplicityOverflow, NotApplicable, NotDiscrete, OutOfRange, ParseError,
                     RegTreeError, ValidationError)
from .tree import (Potential, TreeSpec, branching_function, generation_count, make_tree,
                   reduced_multiplicity, tilde_radius, total_length)
from .reduced import (Cutoff, ReducedProblem, STransformed, Sampling, Truncation,
                      build_reduced_problem, eigenvalues_below, lowest_eigenvalues,
                      oscillation_count, propagators, s_transform)
from .assembly import (CountOptions, CountingReport, OracleResult, assembly_check,
                       boundaryless_counting, counting_function, counting_report,
                       full_tree_eigenvalues, tilde_counting)
from .asymptotics import (BandStructure, RenewalProfile, band_structure, growing_potential_check,
                          hardy_functional, log_weyl_check, renewal_profile,
                          weyl_component_ratio, weyl_total_check)
from .config import RunConfig, parse_config, serialize

__version__ = "0.1.0"
