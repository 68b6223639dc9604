"""
Seedable radio channel simulator: pathloss, link state, antenna arrays,
cluster-based channel coefficients, tapped-delay-line fading and
spatially consistent mobility.
"""
__version__ = "0.1.0"
