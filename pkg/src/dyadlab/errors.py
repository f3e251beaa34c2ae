"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user-supplied configuration (grid sizes, steps, schema)."""


class DimensionError(ValueError):
    """Mismatched array dimensions between coupled components."""


class CertificateError(RuntimeError):
    """A Lyapunov/KYP certificate could not be produced or was refused."""


class DesignError(RuntimeError):
    """Controller or filter synthesis failed (non-Hurwitz, zero DC gain)."""


class SimulationError(RuntimeError):
    """Integration aborted: blow-up guard tripped or non-finite state."""
