"""hazefuse: air quality estimation from heterogeneous sources.

Sky photos give aerosol optical depth through a sky-colour lookup, filter
photos give PM through blob counting, web sources are scraped or parsed,
and everything is fused with a base map by residual kriging.
"""

__version__ = "0.1.0"
