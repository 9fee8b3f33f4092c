"""Exceptions shared across the toolkit."""


class VanishingGap(ValueError):
    """A singular-value gap required by the face type is below tolerance."""


class IllConditioned(ValueError):
    """Eigenvalue clustering or transversality too small for a reliable answer."""


class TransversalityTooSmall(ValueError):
    """Flags are too close to a degenerate relative position."""


class PingPongFailed(RuntimeError):
    """No admissible power certified the ping-pong criterion within budget."""


class BudgetExceeded(RuntimeError):
    """A word enumeration would exceed the configured budget."""
