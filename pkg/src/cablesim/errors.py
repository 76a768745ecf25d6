"""Exception types shared across the package."""


class CableSimError(Exception):
    """Base class for all cablesim errors."""


class ConfigError(CableSimError):
    """A config file could not be parsed or failed validation."""

    def __init__(self, message, path=None, field=None):
        self.path = path
        self.field = field
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if field is not None:
            prefix += f"[{field}] "
        super().__init__(prefix + message)


class CycleDetected(CableSimError):
    """Compartment parent references violate topological order."""

    def __init__(self, compartment_id):
        self.compartment_id = compartment_id
        super().__init__(f"compartment {compartment_id} closes a cycle "
                         "(parent id must be smaller than its own id)")


class MultipleRoots(CableSimError):
    """More than one compartment has no parent."""

    def __init__(self, compartment_ids):
        self.compartment_ids = list(compartment_ids)
        super().__init__(f"multiple root compartments: {self.compartment_ids}")


class DanglingParent(CableSimError):
    """A parent id does not reference an existing compartment."""

    def __init__(self, compartment_id, parent_id):
        self.compartment_id = compartment_id
        self.parent_id = parent_id
        super().__init__(f"compartment {compartment_id} references missing "
                         f"parent {parent_id}")


class StepRejected(CableSimError):
    """Explicit gate update would leave [0, 1] for this step size."""


class DivergenceDetected(CableSimError):
    """A voltage left the finite / |V| <= 10 V envelope."""

    def __init__(self, time, compartment_id=None):
        self.time = time
        self.compartment_id = compartment_id
        where = "" if compartment_id is None else f" in compartment {compartment_id}"
        super().__init__(f"divergence at t = {time!r} s{where}")


class SingularSystem(CableSimError):
    """Tree solve hit a vanishing pivot (defensive; valid systems cannot)."""


class InsufficientHistory(CableSimError):
    """The lagging-stencil scheme needs two completed steps first."""


class InsufficientCycles(CableSimError):
    """The trace does not contain enough complete AP cycles."""


# The stability module's precondition uses the singular spelling.
InsufficientCycle = InsufficientCycles


class NoSpikes(CableSimError):
    """A cycle lacks an alignable spike peak."""


class NonpositiveError(CableSimError):
    """Order estimation needs strictly positive error values."""


class SignalTooShort(CableSimError):
    """Signal too short for the requested spectral estimate."""


class UnsupportedScheme(CableSimError):
    """Scheme name not in the roster (defensive)."""


class RegimeViolation(CableSimError):
    """A study's required dynamical regime does not hold (e.g. spikes in a
    subthreshold convergence ladder)."""
