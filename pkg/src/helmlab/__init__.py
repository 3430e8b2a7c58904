"""Resonance widths of a rectangular Helmholtz resonator with a thin straight neck."""

from .cavity import RectCavity
from .errors import HelmlabError
from .solver import ModeTruncation, ResonanceResult, ResonatorGeometry, find_resonance, sweep

__all__ = [
    "HelmlabError",
    "ModeTruncation",
    "RectCavity",
    "ResonanceResult",
    "ResonatorGeometry",
    "find_resonance",
    "sweep",
]
__version__ = "0.1.0"
