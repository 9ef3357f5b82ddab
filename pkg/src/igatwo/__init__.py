"""Two-level solver for isogeometric Poisson discretizations with Schwarz smoothing."""

__version__ = "0.1.0"
