"""Numerical laboratory for annulus-based local mass functionals on nearly
Euclidean metrics, Ricci-DeTurck flow at desk scale, evolved radial test
functions, and the gluing of bilipschitz maps to Euclidean isometries."""

__version__ = "0.1.0"
