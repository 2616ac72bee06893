"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    """A parameter is outside its documented domain."""


class InvalidInput(ValueError):
    """Input data is malformed or insufficient for the requested operation."""


class InvalidState(RuntimeError):
    """An object or computation reached a state it cannot proceed from."""


class FingerprintMismatch(InvalidInput):
    """A checkpoint was produced under a different schedule or model setup."""

    def __init__(self, differing):
        self.differing = dict(differing)
        keys = ", ".join(
            f"{k} (checkpoint={a!r}, config={b!r})" for k, (a, b) in sorted(self.differing.items())
        )
        super().__init__(f"checkpoint fingerprint mismatch: {keys}")
