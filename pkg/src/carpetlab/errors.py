class CarpetLabError(ValueError):
    """Error carrying a stable machine-readable code.

    `detail` holds structured context (offending value, step index, ...).
    """

    def __init__(self, code, message="", **detail):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {message}" if message else code)


class BudgetExceeded(CarpetLabError):
    pass


class InvariantViolation(CarpetLabError):
    pass
