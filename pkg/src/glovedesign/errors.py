"""Exception hierarchy.

Validation errors map to CLI exit code 2, numerical failures to exit code 3.
"""


class GloveDesignError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(GloveDesignError, ValueError):
    """Bad input: malformed data, inconsistent configuration, wrong shapes."""

    exit_code = 2


class ShapeError(ValidationError):
    def __init__(self, detail: str = ""):
        super().__init__("shape error" + (f": {detail}" if detail else ""))


class ModeError(ValidationError):
    def __init__(self, detail: str = ""):
        super().__init__("mode error" + (f": {detail}" if detail else ""))


class BudgetError(ValidationError):
    def __init__(self, count: int, budget: int):
        super().__init__(
            f"combinatorial budget exceeded; use flow solver ({count} subsets > {budget})"
        )


class NumericalError(GloveDesignError, ArithmeticError):
    """The numerics failed: singular matrices, no feasible solver result."""

    exit_code = 3


class DegenerateDesignError(NumericalError):
    def __init__(self, detail: str = ""):
        super().__init__("degenerate design" + (f": {detail}" if detail else ""))
