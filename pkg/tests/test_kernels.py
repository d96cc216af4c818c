from __future__ import annotations

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from igt import _pykernels, kernels

try:
    from igt._ext import kernels as ext
except ImportError:  # pragma: no cover - extension optional
    ext = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if ext is not None:
    BACKENDS.append(pytest.param(ext, id="cython"))


def sym(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    return (a + a.T) / 2.0


@pytest.mark.parametrize("impl", BACKENDS)
@pytest.mark.parametrize("n", [1, 2, 5, 17, 40])
def test_jacobi_matches_dense_solver(impl, n):
    a = sym(n, n)
    w, V, _ = impl.jacobi_eigh(a)
    np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(a), atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(a @ V, V * w, atol=1e-9)


def test_k2_eigenvalues():
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    w, _, _ = kernels.jacobi_eigh(L)
    np.testing.assert_allclose(np.sort(w), [0.0, 2.0], atol=1e-10)


@pytest.mark.skipif(ext is None, reason="extension not built")
@pytest.mark.parametrize("n", [3, 12, 30])
def test_backends_agree_exactly(n):
    a = sym(n, 100 + n)
    wp, Vp, sp = _pykernels.jacobi_eigh(a)
    wc, Vc, sc = ext.jacobi_eigh(a)
    assert sp == sc
    np.testing.assert_array_equal(wp, wc)
    np.testing.assert_array_equal(Vp, Vc)


@pytest.mark.parametrize("impl", BACKENDS)
def test_pairs_within_brute_force(impl):
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 8, size=(15, 3))
    b = rng.uniform(0, 8, size=(40, 3))
    got = [tuple(p) for p in impl.pairs_within(a, b, 3.0)]
    assert got == oracles.pairs_within(a, b, 3.0)
    mask = impl.min_dist_within(b, a, 3.0)
    assert list(np.nonzero(mask)[0]) == sorted({j for _, j in got})


@pytest.mark.parametrize("impl", BACKENDS)
def test_pairs_within_empty(impl):
    assert impl.pairs_within(np.zeros((0, 3)), np.zeros((4, 3)), 5.0).shape == (0, 2)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.just(3)), elements=st.floats(-6, 6)),
       arrays(np.float64, st.tuples(st.integers(1, 9), st.just(3)), elements=st.floats(-6, 6)),
       st.floats(0.1, 6.0))
def test_pairs_backends_property(a, b, cutoff):
    want = oracles.pairs_within(a, b, cutoff)
    for impl in ([_pykernels] + ([ext] if ext is not None else [])):
        assert [tuple(p) for p in impl.pairs_within(a, b, cutoff)] == want


def test_pure_python_env_selects_fallback():
    code = "import igt.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, IGT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_name_reflects_import():
    mod = importlib.reload(kernels)
    forced = os.environ.get("IGT_PURE_PYTHON", "") not in ("", "0")
    assert mod.BACKEND == ("cython" if ext is not None and not forced else "python")
