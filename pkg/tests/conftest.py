import math

import numpy as np
import pytest

from ellipse_calib.geometry import Mpc, NetworkLink, make_delay_ellipse


@pytest.fixture
def e345():
    """tx=(-3,0), rx=(3,0), d=10: a=5, b=4."""
    return make_delay_ellipse(NetworkLink((-3.0, 0.0), (3.0, 0.0)), Mpc(10.0))


@pytest.fixture
def e_setup2():
    return make_delay_ellipse(NetworkLink((0.0, 0.0), (31.37, 0.0)), Mpc(38.673))


def random_ellipses(rng, n):
    """Random links with path lengths between 1.01 and 3 times the LoS distance."""
    out = []
    for _ in range(n):
        tx = rng.uniform(-50, 50, 2)
        ang = rng.uniform(0, 2 * math.pi)
        dl = rng.uniform(0.5, 40)
        rx = tx + dl * np.array([math.cos(ang), math.sin(ang)])
        d = dl * rng.uniform(1.01, 3.0)
        out.append(make_delay_ellipse(NetworkLink(tuple(tx), tuple(rx)), Mpc(d)))
    return out
