"""Exception types shared across the package."""


class GraphFormatError(ValueError):
    """A graph directory or perturbation file violates the documented format."""


class EmptyTargetSetError(RuntimeError):
    """Target selection produced no nodes; raising filter_ratio usually helps."""


class EmptyPoolError(RuntimeError):
    """No candidate fake edge exists (no viable second-class anchor)."""


class TrainingDivergedError(RuntimeError):
    """A non-finite loss or activation appeared during training or inference."""
