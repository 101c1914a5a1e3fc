"""Solution-landscape observables of the symmetric binary perceptron.

Subpackages
-----------
numerics    tail-stable special functions and quadrature rules
ensemble    model parameters, the kappa_SAT equation, small-alpha rescaling
moments     first/second-moment exponents and the sandwich bounds
smallalpha  rescaled local-entropy potential, thresholds, Sigma(s) curves
planted_rs  replica-symmetric planted free energy and saddle iteration
one_rsb     1RSB potential, branch continuation, x -> infinity regimes
oracle      exact small-n enumeration and planted-instance sampling
cli         command-line surface producing deterministic CSV artifacts
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source tree without install
    __version__ = "0.0.0"

__all__ = [
    "numerics",
    "ensemble",
    "moments",
    "smallalpha",
    "planted_rs",
    "one_rsb",
    "oracle",
    "cli",
]
