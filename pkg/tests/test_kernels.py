import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nlsgap import kernels
from nlsgap._jit import HAVE_NUMBA

finite = st.floats(-50.0, 50.0, allow_nan=False)
samples = arrays(np.float64, st.integers(1, 40), elements=finite)


@pytest.mark.parametrize("name", ["g", "dg", "G"])
@pytest.mark.parametrize("kind,p", [(kernels.POWER, 4.0), (kernels.POWER, 3.5), (kernels.LOGTYPE, 4.0)])
@given(u=samples)
@settings(max_examples=40, deadline=None)
def test_numba_and_numpy_agree(name, kind, p, u):
    q = np.linspace(0.5, 2.0, u.size)
    a = kernels.numba_kernels[name](kind, p, q, u)
    b = kernels.numpy_kernels[name](kind, p, q, u)
    assert a.shape == u.shape
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-300)


def test_logtype_g_is_ln_form():
    u = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    q = np.ones_like(u)
    expect = u * np.log1p(np.abs(u) ** 2)
    np.testing.assert_allclose(kernels.g_values(kernels.LOGTYPE, 4.0, q, u), expect, rtol=1e-15)


@pytest.mark.parametrize("impl", ["numba", "numpy"])
def test_logtype_primitive_matches_quadrature_across_series_switch(impl):
    # u**2 straddles the switch between the series and the closed form
    cut = np.sqrt(kernels._SERIES_CUT)
    u = np.array([0.3 * cut, cut * (1 - 1e-9), cut * (1 + 1e-9), 3.0 * cut, 2.0])
    table = kernels.numba_kernels if impl == "numba" else kernels.numpy_kernels
    G = table["G"](kernels.LOGTYPE, 4.0, np.ones(u.size), u)
    ref = [scipy.integrate.quad(lambda s: s * np.log1p(s * s), 0, x, epsabs=0, epsrel=1e-13)[0] for x in u]
    np.testing.assert_allclose(G, ref, rtol=1e-12)


def test_primitive_is_small_amplitude_quartic():
    u = np.array([1e-6, 1e-4])
    G = kernels.G_values(kernels.LOGTYPE, 4.0, np.ones(2), u)
    np.testing.assert_allclose(G, u ** 4 / 4, rtol=1e-7)


@given(
    u=samples,
    alpha=st.floats(1e-3, 1e3),
    mu=st.sampled_from([3.0, 4.0, 6.0]),
)
@settings(max_examples=60, deadline=None)
def test_sum_inverse_solves_equation(u, alpha, mu):
    for impl in (kernels.numba_kernels, kernels.numpy_kernels):
        s = impl["sum_inverse"](u, alpha, mu)
        lhs = s + alpha * np.abs(s) ** (mu - 2) * s
        np.testing.assert_allclose(lhs, u, rtol=1e-12, atol=1e-12)
        assert np.all(np.sign(s) == np.sign(u))
        assert np.all(np.abs(s) <= np.abs(u))


def test_env_flag_selects_numpy_path():
    code = (
        "import numpy as np, nlsgap.kernels as k, nlsgap._jit as j;"
        "print(j.JIT_ENABLED, k.g_values is k.numpy_kernels['g'])"
    )
    env = dict(os.environ, NLSGAP_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]
    env["NLSGAP_DISABLE_JIT"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split()[0] == str(HAVE_NUMBA)
