"""Numerical lab for quasi-periodic Schrodinger operators over circle maps.

Modules: ``arithmetic`` (continued fractions), ``circle_maps``,
``potentials``, ``operators`` (boxes, determinants, eigenvalue curves),
``spectral`` (Lyapunov exponent, IDS, Thouless, large deviations),
``localization`` (eigenvectors, regularity, envelopes) and ``verify``.
"""

__version__ = "0.1.0"
