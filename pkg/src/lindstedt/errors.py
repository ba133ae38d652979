"""Exception hierarchy.

Every error carries a ``stage`` string naming the construction that failed,
so the command line can report where a pipeline stopped.
"""


class LindstedtError(Exception):
    """Base class; ``stage`` names the failing construction."""

    stage = "general"

    def __init__(self, message, stage=None, **details):
        super().__init__(message)
        if stage is not None:
            self.stage = stage
        self.details = details


class ConfigError(LindstedtError):
    stage = "config"


class InvariantViolation(LindstedtError):
    stage = "lattice partition"


class MissingBlock(LindstedtError):
    stage = "second Melnikov condition"


class AsymmetricInput(LindstedtError):
    stage = "block norms"


class SingularShiftedMatrix(LindstedtError):
    stage = "shifted block inverse"


class SingularSchurBlock(LindstedtError):
    stage = "resonant Schur complement"


class SingularA22(LindstedtError):
    stage = "resonant block decomposition"


class LabelInconsistency(LindstedtError):
    stage = "tree labels"


class BoundViolation(LindstedtError):
    stage = "scale counting bound"


class MissingCounterterm(LindstedtError):
    stage = "counterterm table"


class NoConvergence(LindstedtError):
    stage = "fixed-point iteration"


class MelnikovFailure(LindstedtError):
    stage = "Melnikov conditions"


class SearchExhausted(LindstedtError):
    stage = "wave-packet construction"


class NegativeAmplitudeSquare(LindstedtError):
    stage = "bifurcation amplitudes"


class BlockBoundViolation(LindstedtError):
    stage = "linearized bifurcation blocks"
