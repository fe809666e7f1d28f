"""Distribution-valued graph signals: Gaussian measures on graphs in Wasserstein space.

The top-level namespace re-exports the most used entry points; see the
submodules for the full API.
"""

__version__ = "0.1.0"

from .copula import CorrelationMatrix, Marginals, assemble_joint, project_correlation
from .gaussian import GaussianMeasure, dirac, pushforward, w2, w2_squared
from .graph import ChebFilter, Graph, build_laplacian, materialize_filter
from .learn import GdsCopProblem, LearnSettings, learn_gds_cop
from .transforms import gds_filter, gds_ft, gds_ift

__all__ = [
    "__version__",
    "ChebFilter",
    "CorrelationMatrix",
    "GaussianMeasure",
    "GdsCopProblem",
    "Graph",
    "LearnSettings",
    "Marginals",
    "assemble_joint",
    "build_laplacian",
    "dirac",
    "gds_filter",
    "gds_ft",
    "gds_ift",
    "learn_gds_cop",
    "materialize_filter",
    "project_correlation",
    "pushforward",
    "w2",
    "w2_squared",
]
