"""Spectral kernels of fractional Laplacians on closed model manifolds.

Heat, wave and Poisson kernels of the extension problem, the transforms that
connect them, source-to-solution maps on subsets and a reconstruction
pipeline from patch data back to the heat and wave kernels.
"""

__version__ = "0.1.0"
