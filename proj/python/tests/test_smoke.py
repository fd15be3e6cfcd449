# SPDX-License-Identifier: Apache-2.0
import json
import math

import numpy as np
import pytest

import ctxrep


def test_vendi_analytic_cases():
    h, s = ctxrep.entropy_and_score(np.ones((4, 4)))
    assert abs(h) < 1e-12 and s == pytest.approx(1.0)
    h, s = ctxrep.entropy_and_score(np.eye(4))
    assert s == pytest.approx(4.0)
    _, s = ctxrep.entropy_and_score(np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert abs(s - 1.75477) < 1e-4


def test_eigh_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    a = (a + a.T) / 2
    vals, vecs = ctxrep.eigh(a)
    np.testing.assert_allclose(vals, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-10)
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, a, atol=1e-10)


def test_gradient_against_finite_differences():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 5))
    g = ctxrep.entropy_gradient(x)
    fd = np.zeros_like(x)
    eps = 1e-6
    for idx in np.ndindex(x.shape):
        up, dn = x.copy(), x.copy()
        up[idx] += eps
        dn[idx] -= eps
        fd[idx] = (ctxrep.vendi(up)[0] - ctxrep.vendi(dn)[0]) / (2 * eps)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-5


def test_repulse_raises_diversity_and_zero_is_identity():
    x = np.array([[1.0, 0.01, 0.0], [1.0, 0.0, 0.01], [0.9, 0.0, 0.0]])
    assert np.array_equal(ctxrep.repulse(x, 0.0, 5), x)
    y = ctxrep.repulse(x, 0.05, 4, normalize=True)
    assert ctxrep.vendi(y)[1] > ctxrep.vendi(x)[1]


def test_kernels_and_pairs():
    k = ctxrep.cosine_kernel(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert k[0, 1] == pytest.approx(1 / math.sqrt(2))
    k = ctxrep.rbf_kernel(np.array([[0.0, 0.0], [math.sqrt(2), 0.0]]), 1.0)
    assert k[0, 1] == pytest.approx(math.exp(-1))
    assert ctxrep.average_pair_vendi(np.eye(3)) == pytest.approx(2.0)


def test_blend_endpoints():
    a, b = [0.1, -2.0], [3.0, 4.0]
    assert ctxrep.blend(a, b, 0.0) == a
    assert ctxrep.blend(a, b, 1.0) == b
    assert ctxrep.blend([0, 0], [2, 4], -0.5) == [-1, -2]


def test_simulate_collapse_and_rescue():
    base = ctxrep.simulate("", "none", 0)
    rescued = ctxrep.simulate("", "contextual", 0)
    assert base["mode_coverage"] == 1
    assert rescued["mode_coverage"] >= 2
    assert rescued["vendi_rbf"] > base["vendi_rbf"]
    assert len(rescued["samples"]) == 8


def test_errors():
    with pytest.raises(ctxrep.CtxrepError):
        ctxrep.cosine_kernel(np.zeros((2, 3)))
    with pytest.raises(ctxrep.CtxrepError):
        ctxrep.simulate("world.nonsense = 1", "none", 0)


def test_cli_passthrough():
    code, out, err = ctxrep.run_command(["grad-check", "--batch", "3", "--dim", "4", "--seeds", "5"])
    assert code == 0 and err == ""
    assert json.loads(out)["max_relative_error"] < 1e-5
    code, _, err = ctxrep.run_command(["vendi"])
    assert code == 2 and "error" in json.loads(err)
