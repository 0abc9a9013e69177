"""Population covariance eigenvalue estimation from sample eigenvalues.

Consistent estimates of the distinct eigenvalues of a covariance matrix when
the dimension and the number of samples are of the same order, their
Gaussian fluctuations, and a power-estimation margin built on them.
"""

from importlib.metadata import PackageNotFoundError, version

from .errors import InputError, NumericalError, PopEigError
from .estimator import estimate, estimate_rho, solve_mu
from .model import PopulationModel, make_model, validate_model
from .sampling import SampleSpectrum, synthesize_spectrum
from .spectrum import separability_check, support_clusters
from .variance import empirical_theta, limiting_theta

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "InputError",
    "NumericalError",
    "PopEigError",
    "PopulationModel",
    "SampleSpectrum",
    "empirical_theta",
    "estimate",
    "estimate_rho",
    "limiting_theta",
    "make_model",
    "separability_check",
    "solve_mu",
    "support_clusters",
    "synthesize_spectrum",
    "validate_model",
]
