"""Exception types shared across the package."""


class ModelError(ValueError):
    """Malformed model, automaton or policy input."""


class LTLSyntaxError(ModelError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnsupportedFragment(ModelError):
    """Formula lies outside the translatable fragment."""


class AssumptionViolation(RuntimeError):
    """One of the structural assumptions required by the learner failed.

    ``number`` identifies the assumption: 2 (bounded marker cycles),
    3 (unique entrance), 4 (unichain).
    """

    def __init__(self, number: int, message: str, witnesses=()):
        super().__init__(f"assumption {number} violated: {message}")
        self.number = number
        self.witnesses = list(witnesses)


class DivergentACPC(RuntimeError):
    """Policy never completes cycles from some recurrent state."""


class StructureViolation(RuntimeError):
    """Observed transition outside the declared support."""


class BudgetExhausted(RuntimeError):
    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
