import numpy as np
import pytest

from evmono.koopman import make_koopman_spec
from evmono.models import get_model
from evmono.ode import find_equilibrium

# toxin-antitoxin trajectory stages run at a relaxed stiffness parameter;
# the true value (1e-6) is used only for equilibrium/spectral analysis
TOXIN_EPS_OVERRIDE = 0.1


class ModelCtx:
    def __init__(self, entry, x_star, spec=None):
        self.entry = entry
        self.field = entry.field
        self.x_star = x_star
        self.spec = spec


@pytest.fixture(scope="session")
def three_state():
    entry = get_model("three_state")
    x_star = find_equilibrium(entry.field, entry.newton_guesses[0])
    spec = make_koopman_spec(entry.field, x_star)
    return ModelCtx(entry, x_star, spec)


@pytest.fixture(scope="session")
def fhn():
    entry = get_model("fitzhugh_nagumo")
    x_star = find_equilibrium(entry.field, entry.newton_guesses[0])
    spec = make_koopman_spec(entry.field, x_star)
    return ModelCtx(entry, x_star, spec)


@pytest.fixture(scope="session")
def reduced_two_state():
    entry = get_model("reduced_two_state")
    x_star = find_equilibrium(entry.field, entry.newton_guesses[0])
    spec = make_koopman_spec(entry.field, x_star)
    return ModelCtx(entry, x_star, spec)


@pytest.fixture(scope="session")
def toxin_relaxed():
    entry = get_model("toxin_antitoxin", params={"eps": TOXIN_EPS_OVERRIDE})
    x_star = find_equilibrium(entry.field, entry.newton_guesses[0])
    spec = make_koopman_spec(entry.field, x_star)
    return ModelCtx(entry, x_star, spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
