"""
Exception hierarchy. Every error knows the CLI exit code it maps to:
2 for configuration problems, 3 for data problems, 4 for anything internal.
"""


class DecisionCalibrationError(Exception):
    exit_code = 4


# --- Configuration errors (exit code 2) ---

class ConfigError(DecisionCalibrationError):
    exit_code = 2


class ParamError(ConfigError):
    """Task or generator parameters outside their valid range."""


class ConfigMismatchError(ConfigError):
    """Two reports (or aggregates) that cannot be compared."""


class UnsupportedCostShape(ConfigError):
    """The oracle only integrates costs that are piecewise linear in the outcome."""


# --- Data errors (exit code 3) ---

class DataError(DecisionCalibrationError):
    exit_code = 3


class SchemaError(DataError):
    pass


class ValidationError(DataError):
    pass


class IoError(DataError):
    pass


class AlignmentError(DataError):
    pass


class EmptyMaskError(DataError):
    pass


class CoverageError(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"({init:%Y-%m-%dT%H:%MZ}, +{lead}h)" for init, lead in self.missing[:10])
        more = f" ... and {len(self.missing) - 10} more" if len(self.missing) > 10 else ""
        super().__init__(f"No observation for {len(self.missing)} (init, lead) pairs: {shown}{more}")


class DomainError(DataError):
    pass


class DegenerateEnsembleError(DataError):
    pass


class ZeroSkillError(DataError):
    pass


class EmptyGroupError(DataError):
    pass


class ZeroReferenceError(DataError):
    pass
