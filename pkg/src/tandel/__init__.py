"""Tangential Delaunay complexes on smooth submanifolds of R^N.

Builds the complex induced by weighted Delaunay stars computed inside
tangent planes, refines the sample until every top-dimensional simplex
is thick and power-protected, and ships brute-force oracles that verify
the result against ambient and manifold-restricted Delaunay complexes.
"""

__version__ = "0.1.0"
