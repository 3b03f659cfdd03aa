"""Hot numerical kernels.

``_ckernels`` is the compiled (Cython) implementation; ``pure`` is the numpy
fallback with identical contracts.
"""
