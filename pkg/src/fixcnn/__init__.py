"""Design-space exploration toolchain for fixed-point streaming CNN accelerators."""

__version__ = "0.1.0"
