"""Julia sets of non-autonomous polynomial sequences, on a raster."""
from .core import Bounds, Polynomial, SequenceSpec, SpecError
from .dynamics import GridSpec, JuliaApprox, RegionMask, filled_julia

__all__ = ["Bounds", "Polynomial", "SequenceSpec", "SpecError", "GridSpec", "JuliaApprox",
           "RegionMask", "filled_julia"]
