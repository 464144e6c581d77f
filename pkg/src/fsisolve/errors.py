"""Exception types shared across the solver stack."""


class SingularBlock(ArithmeticError):
    """A dense or sparse factorization met a (numerically) zero pivot."""

    def __init__(self, label, detail=""):
        self.label = label
        msg = f"singular block {label!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InvertedElement(ValueError):
    """An element has a non-positive geometry Jacobian determinant."""

    def __init__(self, element, detj=None):
        self.element = element
        self.detj = detj
        msg = f"inverted element {element}"
        if detj is not None:
            msg += f" (det J = {detj:.3e})"
        super().__init__(msg)


class ElementInversion(InvertedElement):
    """Raised when the deformed configuration x + d folds an element."""


class ConfigError(ValueError):
    pass


class SolverFailure(RuntimeError):
    def __init__(self, msg, step=None):
        self.step = step
        if step is not None:
            msg = f"time step {step}: {msg}"
        super().__init__(msg)
