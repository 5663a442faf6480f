"""Style transfer of vocal effects by MAP estimation over a preset prior."""

__version__ = "0.1.0"
