"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so command wrappers can
translate failures without a lookup table.
"""


class FoldkitError(Exception):
    exit_code = 1


class EvaluationOverflow(FoldkitError, FloatingPointError):
    exit_code = 2


class SolverError(FoldkitError):
    exit_code = 2


class NoConvergence(SolverError):
    pass


class DegenerateFold(SolverError):
    pass


class WrongBranch(SolverError):
    pass


class ChartViolation(SolverError):
    pass


class DegenerateSingularity(SolverError):
    pass


class BracketError(FoldkitError):
    exit_code = 3


class NoRootInBracket(BracketError):
    pass


class NoSignChange(BracketError):
    pass


class HypothesisFailed(FoldkitError):
    exit_code = 4


class BlowUp(FoldkitError, FloatingPointError):
    exit_code = 2

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
