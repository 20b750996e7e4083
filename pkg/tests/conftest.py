import numpy as np
import pytest

from etckit import linear, nonlinear


@pytest.fixture(scope="session")
def scalar_plant():
    """Scalar testbed: A=1, B=1, K=-2, Q=1, theta=2 gives P=0.5, c_alpha=0.5,
    c_gamma=2 and closed-loop Lipschitz constant sqrt(5)."""
    return linear.derive_constants([[1.0]], [[1.0]], [[-2.0]], [[1.0]], theta=2.0)


@pytest.fixture(scope="session")
def scalar_params(scalar_plant):
    return linear.barrier_params(scalar_plant, r=0.25, sigma=0.25, c_beta=1.0)


@pytest.fixture(scope="session")
def scalar_cert(scalar_plant):
    return nonlinear.certificate_from_plant(scalar_plant)


@pytest.fixture(scope="session")
def scalar_field(scalar_plant):
    from etckit.sim import VectorField

    A_cl = scalar_plant.A_cl
    BK = scalar_plant.BK

    return VectorField(
        dim_x=1,
        dim_e=1,
        eval=lambda x, e: A_cl @ x + BK @ e,
        lipschitz_L_f=scalar_plant.lipschitz_bound(),
    )
