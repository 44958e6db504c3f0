"""Exception types shared across the package."""


class PbdwError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PbdwError):
    """Invalid configuration value or malformed config document.

    ``key_path`` points at the offending entry, e.g. ``model.rho``.
    """

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path is not None:
            message = f"{key_path}: {message}"
        super().__init__(message)


class RankDeficiencyError(PbdwError):
    """A vector family lost rank during orthonormalization.

    ``index`` identifies the offending member (e.g. a sensor index).
    """

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class UnstableRecoveryError(PbdwError):
    """Recovery map undefined: the reduced space meets the unobserved
    complement nontrivially (stability factor below threshold)."""


class BudgetError(PbdwError):
    """A configured size or work budget would be exceeded."""


class SolverError(PbdwError):
    """An internal solve failed to meet its accuracy contract."""


class IngestError(PbdwError):
    """Malformed external data file; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
