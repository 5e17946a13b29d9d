"""Operator fractional Brownian sheet: simulation and convergence diagnostics.

Core objects:

- :class:`ofbs.matfun.OperatorExponent` — validated exponent matrix D with
  the derived kernel exponent A = D/2 - I/4.
- :class:`ofbs.kernel.KernelSpec` / :func:`ofbs.kernel.cov_integral` — the
  tensor Riemann-Liouville kernel and the limit-field covariance.
- :mod:`ofbs.mdgen` — martingale-difference arrays driving the approximation.
- :func:`ofbs.sheet.simulate_xn` — the approximating field on a grid.
- :mod:`ofbs.oracle` — exact Gaussian sampler of the limit field.
- :mod:`ofbs.stats` — the verification metrics.

Human interfaces: the `ofbs` CLI (:mod:`ofbs.cli`) and the FastAPI service
(:mod:`ofbs.api`, run with `uvicorn ofbs.api:app`).
"""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, NumericError, QuadratureError
from .matfun import OperatorExponent, mat_exp, mat_power, operator_norm, spectrum_bounds
from .kernel import CovarianceTensor, KernelSpec, cell_integral, cov_integral, kernel_eval
from .mdgen import MDArray, check_conditions, gen_product_sign, gen_rademacher, partial_sum_field
from .sheet import GridField, increment, simulate_xn
from .oracle import OracleModel, build_oracle, sample_oracle
from .config import SimConfig, config_hash, load_config, parse_config

__all__ = [
    "__version__",
    "ConfigError",
    "DomainError",
    "NumericError",
    "QuadratureError",
    "OperatorExponent",
    "mat_exp",
    "mat_power",
    "operator_norm",
    "spectrum_bounds",
    "CovarianceTensor",
    "KernelSpec",
    "cell_integral",
    "cov_integral",
    "kernel_eval",
    "MDArray",
    "check_conditions",
    "gen_product_sign",
    "gen_rademacher",
    "partial_sum_field",
    "GridField",
    "increment",
    "simulate_xn",
    "OracleModel",
    "build_oracle",
    "sample_oracle",
    "SimConfig",
    "config_hash",
    "load_config",
    "parse_config",
]
