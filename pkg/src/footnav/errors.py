"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class NoStanceError(ValidationError):
    """No stationary interval was found in an IMU stream."""


class StaleFixError(ValidationError):
    """A pose fix arrived with a timestamp older than the last accepted fix."""


class NoPathError(RuntimeError):
    """The goal cannot be reached on the given costmap."""


class NotFoundError(LookupError):
    """No obstacle carries the requested label."""

    def __init__(self, label, available):
        self.label = label
        self.available = sorted(available)
        listing = ", ".join(self.available) if self.available else "none"
        super().__init__(f"no object labelled {label!r}; available labels: {listing}")


class FormatError(ValidationError):
    """A data file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")
