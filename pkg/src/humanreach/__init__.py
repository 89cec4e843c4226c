"""Human-like reaching control for serial robot arms."""

__version__ = "0.1.0"
