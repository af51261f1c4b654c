"""Exception types shared across the package."""


class ContractError(RuntimeError):
    """An internal invariant or cross-artifact contract was violated."""


class TrainingDivergedError(ContractError):
    """Training produced a non-finite loss; a diagnostic checkpoint was written."""

    def __init__(self, message: str, checkpoint_path: str | None = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
