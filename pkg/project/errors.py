class UpcError(Exception):
    """Base class for everything this package raises on purpose."""


class DomainError(UpcError, ValueError):
    """An input is outside the domain an operation is defined on."""


class SchemaMismatch(DomainError):
    """A draw does not follow the label schema a model or test expects."""


class UnsupportedConfiguration(UpcError, ValueError):
    """The input is valid but the requested computation is not available."""


class SpendingStateError(UpcError, RuntimeError):
    """An alpha-spending round was reused or consumed out of order."""


class ApproximationWarning(UserWarning):
    pass


class ClampWarning(UserWarning):
    pass


class TieWarning(UserWarning):
    pass


class McmcDiagnosticWarning(UserWarning):
    pass
