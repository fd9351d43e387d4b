"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: usage errors are handled by click (2),
format errors exit 3, numeric/degeneracy failures exit 4.
"""


class EcoError(Exception):
    exit_code = 1


class FormatError(EcoError):
    """Malformed or mismatched input file (bad magic, wrong dims, ...)."""

    exit_code = 3


class NumericError(EcoError):
    exit_code = 4


class BehindCameraError(NumericError):
    pass


class DegenerateAxesError(NumericError):
    pass


class DegenerateBaselineError(NumericError):
    pass


class DegenerateOrientationError(NumericError):
    pass


class InvalidSpanError(NumericError):
    pass


class OversizedWarpError(NumericError):
    pass


class StripTooWideError(NumericError):
    pass


class DimensionMismatchError(FormatError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, iteration, message=""):
        self.iteration = iteration
        super().__init__(message or f"training diverged at iteration {iteration}")
