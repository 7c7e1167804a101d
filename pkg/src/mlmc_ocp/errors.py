class SolverError(RuntimeError):
    """A pathwise linear or Newton solve failed.

    Carries the level and sample id so that estimator runs can report which
    realisation broke.
    """

    def __init__(self, message, level=None, sample_id=None, residual=None):
        self.level = level
        self.sample_id = sample_id
        self.residual = residual
        details = []
        if level is not None:
            details.append(f"level={level}")
        if sample_id is not None:
            details.append(f"sample_id={sample_id}")
        if residual is not None:
            details.append(f"residual={residual:.3e}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class ConfigError(ValueError):
    """Invalid experiment configuration."""
