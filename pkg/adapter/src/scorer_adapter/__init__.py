"""Bridge between real models and the countercurate evaluation file formats."""

__version__ = "0.1.0"
