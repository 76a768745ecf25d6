import numpy as np
import pytest

from cablesim import models
from cablesim.integrators import make_initial_state


@pytest.fixture(scope="session")
def surrogate():
    return models.surrogate_model()


@pytest.fixture(scope="session")
def subthreshold():
    return models.subthreshold_model()


@pytest.fixture(scope="session")
def passive_single():
    return models.passive_single_compartment(e_l=-0.04)


@pytest.fixture(scope="session")
def uniform_chain():
    """8-compartment frozen-conductance chain for eigenmode studies."""
    return models.uniform_chain_model(8, gbar=500.0, gate_value=0.5,
                                      reversal=0.0, e_l=-0.06)


def eigenmode_state(model, theta, eps=1e-3):
    """Equilibrium plus a cosine plane-wave perturbation.

    Valid for uniform chains with spatially constant channel conductance,
    where cos(theta (j + 1/2)) is an exact eigenvector and the equilibrium
    voltage is uniform.
    """
    k_tot = model.alpha[0]
    a_tot = model.a_el[0]
    for c in range(model.ch_gbar.size):
        g = model.ch_gbar[c] * 0.5 ** int(model.ch_p[c])
        k_tot += g * model.invcm[0]
        a_tot += g * model.ch_e[c] * model.invcm[0]
    veq = a_tot / k_tot
    j = np.arange(model.n)
    mode = np.cos(theta * (j + 0.5))
    state = make_initial_state(model, v_init=veq)
    state.v = veq + eps * mode
    return state, veq, mode


@pytest.fixture(scope="session")
def desk_config_text():
    """Template for a small experiment TOML; paths filled per test."""
    def make(morph, chans, **overrides):
        lines = [f'morphology = "{morph}"', f'channels = "{chans}"']
        for key, val in overrides.items():
            if isinstance(val, str) and not val.startswith("["):
                lines.append(f'{key} = "{val}"')
            else:
                lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"
    return make


@pytest.fixture(scope="session")
def packaged_configs():
    from importlib.resources import files
    return files("cablesim") / "configs"
