"""Construction, reduction, verification, and storage of fully symmetric
positive interior quadrature rules on the square, cube, prism, and pyramid."""

__version__ = "0.1.0"
