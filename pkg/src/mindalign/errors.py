"""Exception hierarchy.

Every error carries a short ``category`` used by the CLI as a machine-parsable
prefix on stderr.
"""


class MindAlignError(Exception):
    category = "error"


class ShapeError(MindAlignError, ValueError):
    category = "shape"


class ContractError(MindAlignError, ValueError):
    """A precondition of an operation was violated by the caller."""

    category = "contract"


class NonFiniteError(MindAlignError, FloatingPointError):
    category = "numeric"


class ConfigError(MindAlignError, ValueError):
    category = "config"


class SubjectError(MindAlignError, KeyError):
    category = "subject"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DataError(MindAlignError, ValueError):
    category = "data"


class ValidationError(DataError):
    category = "validation"


class FormatError(MindAlignError, ValueError):
    category = "format"
