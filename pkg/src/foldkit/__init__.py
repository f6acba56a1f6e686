"""Fold curves, folded singularities and the FSN II transition of two-fast /
two-slow coupled oscillators, with the coupled FitzHugh-Nagumo experiments."""
from .errors import (BlowUp, BracketError, ChartViolation, DegenerateFold, DegenerateSingularity,
                     EvaluationOverflow, FoldkitError, HypothesisFailed, NoConvergence,
                     NoRootInBracket, NoSignChange, SolverError, WrongBranch)
from .fold import (FoldPoint, FoldSolver, fast_eigen, fhn_seed, fold_curve, phi,
                   simple_fold_check, solve_fold_point)
from .integrate import Trajectory, integrate, rk4_step
from .mmo import (AnalysisConfig, AttractorKind, MmoSignature, Peak, SimConfig,
                  classify_attractor, extract_peaks, signature, simulate, sweep_c1)
from .reduced import (FoldedKind, PlanarKind, ReducedSystem, find_folded_singularity,
                      find_ordinary_equilibrium, reduced_flow_match)
from .system import Params, SystemDefinition, eval_full_rhs, fd_check, fhn_system
from .transcritical import TranscriticalReport, detect_fsn2, verify_fhn_hypotheses

__version__ = "0.1.0"
