"""Exception types raised across the package."""


class VCMError(ValueError):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "vcm_error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InfeasibleLength(VCMError):
    code = "infeasible_length"


class DegenerateProbability(VCMError):
    code = "degenerate_probability"


class OracleTooLarge(VCMError):
    code = "oracle_too_large"


class DimensionMismatch(VCMError):
    code = "dimension_mismatch"


class InvalidInput(VCMError):
    code = "invalid_input"


class NonConvergence(VCMError):
    code = "non_convergence"


class CheckFailed(VCMError):
    code = "check_failed"
