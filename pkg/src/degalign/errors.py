"""Shared exception types."""


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class UnsupportedConfigError(ValueError):
    """A parameter combination outside the supported configuration space."""


class GraphStateError(RuntimeError):
    """Computation-graph misuse, e.g. a second backward pass on the same tape."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but statistically degenerate."""


class ConfigValidationError(ValueError):
    """Aggregated configuration validation failure.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
