"""Exception hierarchy shared by all floesim modules."""


class FloesimError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(FloesimError, ValueError):
    """Invalid distribution or model parameter."""


class ConfigurationError(FloesimError, ValueError):
    """Inconsistent scenario or reduction configuration."""


class ConfigParseError(ConfigurationError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class DegenerateContactError(FloesimError):
    """Two floe centers coincide, so the contact normal is undefined."""

    def __init__(self, id_l, id_j, message=None):
        self.ids = (int(id_l), int(id_j))
        super().__init__(message or f"coincident floe centers for pair {self.ids}")


class NumericalBlowupError(FloesimError):
    def __init__(self, floe_id, time, member=None, detail=""):
        self.floe_id = floe_id
        self.time = time
        self.member = member
        who = f"floe {floe_id}" + (f" (member {member})" if member is not None else "")
        msg = f"non-finite state at t={time:.1f} s, first offending {who}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InsufficientDataError(FloesimError, ValueError):
    pass


class UndefinedScoreError(FloesimError, ValueError):
    """A skill score is undefined for the given input (e.g. zero variance)."""


class OceanStateError(FloesimError):
    """Ocean amplitudes violate conjugate symmetry (reconstructed field not real)."""
