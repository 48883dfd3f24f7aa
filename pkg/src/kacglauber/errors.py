"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid model or experiment configuration."""


class BoxViolation(RuntimeError):
    """A colored profile left the box |m_i| <= p_i beyond tolerance."""


class MarginViolation(ValueError):
    """A path touches the box boundary where strict interior is required."""
