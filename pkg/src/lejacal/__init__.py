"""Bayesian calibration of expensive forward models on weighted Leja nodes.

The package builds polynomial surrogates of a forward model on nested node
sequences whose weighting adapts to the emerging posterior, so that model
evaluations concentrate where the posterior density lives.  Submodules:

- ``polybasis``    multi-index sets, tensor bases, incremental QR scoring
- ``nodes``        weighted Leja sequences and Clenshaw-Curtis grids
- ``surrogate``    interpolants over a node set (barycentric / coefficient)
- ``statmodel``    priors, likelihoods, posteriors, adaptive weights
- ``calibrate``    the adaptive calibration loop
- ``diagnostics``  Lebesgue constants, divergences, convergence rates
- ``sampling``     random-walk Metropolis on a calibrated posterior
- ``testmodels``   analytic benchmarks and a viscous Burgers solver
- ``cli``          command line front end
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AllCandidatesSingular,
    ConfigError,
    ConvergenceFailure,
    DegenerateFit,
    ForwardModelFailure,
    LejacalError,
    NodeSelectionFailure,
    NonlinearSolveFailure,
    NoSignChange,
    NotPositiveDefinite,
    QuadratureUnderflow,
    SingularMatrix,
    UnboundedDivergence,
    UnboundedSearch,
    ZeroDensityStart,
    ZeroMeanData,
)
