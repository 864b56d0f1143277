"""Exception categories raised by evcdr; all derive from ValueError."""


class ConfigError(ValueError):
    """An experiment configuration is missing, malformed or out of range."""


class NumericalError(ValueError):
    """A numerical precondition failed (singular fit, undefined estimator, ...)."""


class PostselectionError(NumericalError):
    """Postselection kept no shots, so the ancilla state is undefined."""
