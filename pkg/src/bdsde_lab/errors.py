"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user input: bad grid parameters, malformed config, bad constants."""


class ResourceError(RuntimeError):
    """Allocation of path storage failed."""


class AuditError(RuntimeError):
    """A verifier precondition (an assumption audit) failed."""


class SimulationAbort(RuntimeError):
    """Non-finite values encountered during simulation.

    Carries enough of a diagnostics payload to name the offending sample.
    """

    def __init__(self, message, b_index=None, w_index=None, node=None):
        super().__init__(message)
        self.b_index = b_index
        self.w_index = w_index
        self.node = node

    def payload(self):
        return {"b_index": self.b_index, "w_index": self.w_index, "node": self.node}


class StabilityWarning(UserWarning):
    """The explicit time step is too coarse for the declared Lipschitz bound."""
