"""composeflow: composable staggered-grid incompressible multiphase flow.

Units are composed from a directory tree of ``Config`` files into a
manifest, which the driver turns into a running simulation.
"""
__version__ = "0.1.0"
