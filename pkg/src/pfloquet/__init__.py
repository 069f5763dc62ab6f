"""Growth rates, Floquet vectors and separation for positive delay and parabolic cocycles."""

__version__ = "0.1.0"
