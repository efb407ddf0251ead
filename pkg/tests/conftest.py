import numpy as np
import pytest

from tbbreg.cli import bundled_seeds_path, load_dataset
from tbbreg.regression import Family, ModelSpec


def clip_open(f, eps=1e-12):
    """Wrap a vectorized (0,1) density so quadrature may touch the endpoints."""
    return lambda y: f(np.clip(y, eps, 1.0 - eps))


@pytest.fixture(scope="session")
def seeds_data():
    return load_dataset(bundled_seeds_path())


@pytest.fixture(scope="session")
def seeds_tbb_spec():
    # germination mean on seed variety and root extract, dispersion on root
    # extract, constant mixture weight, free tilted mean; 1/2 factor coding
    return ModelSpec(
        family=Family.TILTED_BETA_BINOMIAL,
        mu_b_terms=("1", "x1+1", "x2+1"),
        phi_terms=("1", "x2+1"),
        theta_terms=("1",),
        mu_t="free",
    )
