"""Exception and warning types shared across modules."""


class SynthesisError(RuntimeError):
    """Circulant embedding lost too much spectral mass."""


class UnderflowError(FloatingPointError):
    """All transfer mass was absorbed at the boundary."""


class ConvergenceError(RuntimeError):
    pass


class FitError(ValueError):
    pass


class RunWarning(UserWarning):
    """Base class for warnings that must end up in the run manifest."""


class EmbeddingClipWarning(RunWarning):
    pass


class BoundaryMassWarning(RunWarning):
    pass


class HeavyTailWarning(RunWarning):
    pass


class ConvergenceWarning(RunWarning):
    pass


class ReweightingWarning(RunWarning):
    pass


class DroppedPointWarning(RunWarning):
    pass
