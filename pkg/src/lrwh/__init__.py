"""Low-rank WaveHoltz solvers on multiblock SBP-SAT grids."""

__version__ = "0.1.0"
