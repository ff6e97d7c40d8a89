"""Exception types shared across the package."""


class StructuralError(ValueError):
    """A model is ill-formed: dimension mismatch, dangling port, bad reference."""


class AlgebraicLoopError(StructuralError):
    """A network junction has no explicit cause, leaving an algebraic constraint.

    Carries the ids of the constructs participating in the implicit loop so the
    caller can replace them by an explicit solution map.
    """

    def __init__(self, junction: str, construct_ids: list[str]):
        self.junction = junction
        self.construct_ids = list(construct_ids)
        super().__init__(
            f"junction {junction!r}: no effort/flow-defining port; "
            f"algebraic loop among {self.construct_ids}"
        )


class IntegrationError(RuntimeError):
    """Integration produced a non-finite value. Carries the offending time."""

    def __init__(self, time: float, message: str = "non-finite state"):
        self.time = float(time)
        super().__init__(f"{message} at t={time:.6g}")
