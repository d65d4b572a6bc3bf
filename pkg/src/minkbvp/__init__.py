"""Shooting, continuation and a-priori certificates for Minkowski-curvature BVPs
with sign-changing weights: (u'/sqrt(1 - u'^2))' + lam a(t) g(u) = 0."""

from .certificates import (ConstantsFailure, TheoremConstants, brouwer_degree_f_sharp,
                           compute_constants, probe_H1, probe_H2, probe_H3, wedge_certificate)
from .config import ConfigError, ProblemConfig, parse_config, serialize
from .continuation import Branch, blowup_probe, detect_folds, trace_branch
from .nonlinearity import (Nonlinearity, check_nonexistence_condition, check_se_condition,
                           check_zero_conditions, custom, eval_G, growth_ratio_tail, make_builtin)
from .phase_flow import (BlowUpError, HomotopyParams, PhaseState, StiffnessError, Trajectory,
                         energy, integrate, phi, phi_inv)
from .shooting import (BoundaryCondition, Problem, Solution, SolutionCertificate, neumann_residual,
                       solve_neumann, solve_periodic, verify_solution)
from .weight import (SignPartition, WeightFunction, build_step_weight, gamma, mean_value,
                     neg_sup_norm, sign_partition, window_min_l1)

__all__ = [
    "Branch", "BlowUpError", "BoundaryCondition", "ConfigError", "ConstantsFailure", "HomotopyParams",
    "Nonlinearity", "PhaseState", "Problem", "ProblemConfig", "SignPartition", "Solution",
    "SolutionCertificate", "StiffnessError", "TheoremConstants", "Trajectory", "WeightFunction",
    "blowup_probe", "brouwer_degree_f_sharp", "build_step_weight", "check_nonexistence_condition",
    "check_se_condition", "check_zero_conditions", "compute_constants", "custom", "detect_folds",
    "energy", "eval_G", "gamma", "growth_ratio_tail", "integrate", "make_builtin", "mean_value",
    "neg_sup_norm", "neumann_residual", "parse_config", "phi", "phi_inv", "probe_H1", "probe_H2",
    "probe_H3", "serialize", "sign_partition", "solve_neumann", "solve_periodic", "trace_branch",
    "verify_solution", "wedge_certificate", "window_min_l1",
]
