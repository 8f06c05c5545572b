"""Spectral elasticity oracle and extended low-rank approximation surrogate.

Modules: ``microstructure`` (generators, XMS1 files), ``basis`` (descriptor
bases), ``elasticity`` and ``solver`` (stiffness fields, FFT oracle),
``core`` (xLRA fit/predict), ``metrics`` and ``cli``.
"""
__version__ = "0.1.0"
