"""Small data fixtures shared by several test modules."""

import numpy as np

from focalgmm.model import PanelData, single_equation_transform


def iv_fixture(n=200, seed=0, noise=1.0, theta1=None):
    """Exactly identified single equation: three regressors, three instruments.

    ``w = (1, 0.5, 0)`` with the anchor on the first covariate, so the
    parameters are ``(rho, delta[1], delta[2])``.  Regressors load on the
    instruments and share an error component with the outcome, so OLS is
    biased and IV is not.
    """
    rng = np.random.default_rng(seed)
    spec = single_equation_transform(np.array([1.0, 0.5, 0.0]))
    theta0 = np.array([0.6, -0.4, 0.8])
    z = rng.normal(size=(n, 3))
    u = rng.normal(size=n)
    Pi = np.array([[1.0, 0.3, 0.0], [0.2, 1.0, 0.4], [0.0, 0.5, 1.0]])
    x = z @ Pi + 0.5 * u[:, None] + 0.5 * rng.normal(size=(n, 3))
    beta = spec.blocks[0] @ theta0
    y = x @ beta + noise * (0.5 * u + rng.normal(size=n))
    if theta1 is not None:
        spec = spec.with_theta1(theta1)
    else:
        spec = spec.with_theta1(np.arange(3))
    return PanelData(y[:, None], [x], [z]), spec, theta0
