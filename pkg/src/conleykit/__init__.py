"""Index pairs, Lyapunov functions and cuplength bounds for gradient-like flows on cubical grids."""

__version__ = "0.1.0"
