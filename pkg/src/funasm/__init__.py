"""Active subspace analysis for real-valued functionals on discretized
function spaces.

Submodules
----------
hilbert     grids, fields, weighted inner products, projections
randfield   Gaussian measures via truncated Karhunen-Loeve expansions
functionals analytic test functionals and the Poisson control objective
asm         Monte Carlo subspace estimator and its diagnostics
surrogate   AS-distance KNN regression and the 2-D GP surface export
bayesopt    subspace Bayesian optimization (random vs estimated bases)
cli         command-line front end
"""

__version__ = "0.1.0"
