class ErgolabError(ValueError):
    """Error carrying a stable machine-readable code (e.g. ``"boundary-hit"``)."""

    def __init__(self, code, message=None):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class BoundaryHit(ErgolabError):
    """An orbit landed on the partition skeleton; ``record`` holds the truncated prefix."""

    def __init__(self, step, record=None, code="boundary-hit"):
        self.step = step
        self.record = record
        super().__init__(code, f"orbit reached the partition skeleton at step {step}")
