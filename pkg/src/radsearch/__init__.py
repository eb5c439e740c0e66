"""Simulation and planning library for an aerial-survey to ground-vehicle radiation search.

Modules: geo (rasters and file I/O), stereo (disparity back-projection),
radiation (detector model and statistics), survey (scan-line flights),
segmentation (labels, DEM refinement, metrics), planner (weighted A*),
ugvsim (ground mission), scene (synthetic test areas), missions (reference
calibration), report (plots) and cli.
"""

__version__ = "0.1.0"
