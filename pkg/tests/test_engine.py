import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mll.engine import (BrownianPath, SampleSet, em_fine_reference, gbm_exact, mla_step_dual, mla_step_primal,
                        run_chains, synchronous_pair)
from mll.errors import DomainViolation, StepTooLarge
from mll.mirror_maps import Gbm1d, OrthantLogBarrier, PolytopeLogBarrier, Quadratic
from mll.potentials import QuadraticGaussian, RelativeAffine
from mll.rng import stream

import oracles


def orthant(d=1):
    m = OrthantLogBarrier(d)
    return m, RelativeAffine(m, 2.0, 1.0)


def test_dual_step_quadratic_is_ula():
    q = Quadratic(1)
    p = QuadraticGaussian(1.0)
    y = mla_step_dual(q, p, np.array([1.0]), 0.1, np.array([0.5]))
    assert y[0] == pytest.approx(0.9 + math.sqrt(0.2) * 0.5, rel=1e-15)


def test_dual_step_orthant():
    m, p = orthant()
    y = mla_step_dual(m, p, np.array([-1.0]), 0.01, np.array([0.3]))
    # -1 - 0.01 (2 * -1 + 1) + sqrt(0.02) * 1 * 0.3
    assert y[0] == pytest.approx(-1.0 + 0.01 + math.sqrt(0.02) * 0.3, rel=1e-14)


def test_primal_and_dual_steps_agree():
    m = PolytopeLogBarrier(np.eye(2), np.zeros(2))
    p = RelativeAffine(m, 1.5)
    rng = stream(1, "pd")
    x = m.sample_interior(rng, 20)
    z = 0.1 * rng.standard_normal((20, 2))
    yp = m.grad_map(mla_step_primal(m, p, x, 1e-3, z))
    yd = mla_step_dual(m, p, m.grad_map(x), 1e-3, z)
    assert np.allclose(yp, yd, rtol=1e-8)


def test_step_leaving_domain_raises():
    m, p = orthant()
    with pytest.raises(DomainViolation):
        mla_step_dual(m, p, np.array([-1.0]), 0.1, np.array([10.0]))


def test_step_cap_warns():
    m, p = orthant()
    with pytest.warns(StepTooLarge):
        mla_step_dual(m, p, np.array([-1.0]), 0.5, np.array([0.0]), h_cap=0.1)


def test_invalid_step():
    m, p = orthant()
    with pytest.raises(ValueError):
        mla_step_dual(m, p, np.array([-1.0]), 0.0, np.array([0.0]))


def test_policies():
    m, p = orthant()
    y = np.array([[-1.0]])
    z = np.array([[10.0]])
    clamp = mla_step_dual(m, p, y, 0.1, z, policy="clamp_epsilon")
    assert clamp[0, 0] == -1e-12
    res = mla_step_dual(m, p, y, 0.1, z, policy="reject_resample", rng=stream(0, "r"))
    assert res[0, 0] < 0
    with pytest.raises(ValueError):
        mla_step_dual(m, p, y, 0.1, z, policy="reject_resample")
    with pytest.raises(ValueError):
        mla_step_dual(m, p, y, 0.1, z, policy="bogus")


def test_run_chains_reproducible_across_threads():
    m, p = orthant(2)
    init = SampleSet([[-0.5, -0.5]])
    a = run_chains(m, p, init, 0.01, 30, 300, seed=9, threads=1, block_size=64)
    b = run_chains(m, p, init, 0.01, 30, 300, seed=9, threads=3, block_size=64)
    assert np.array_equal(a.points, b.points)
    c = run_chains(m, p, init, 0.01, 30, 300, seed=10, threads=1, block_size=64)
    assert not np.array_equal(a.points, c.points)


def test_run_chains_snapshots_and_provenance():
    m, p = orthant()
    final, snaps = run_chains(m, p, SampleSet([[-0.5]]), 0.01, 10, 50, seed=1, record_at=[0, 5, 10])
    assert set(snaps) == {0, 5, 10}
    assert np.array_equal(snaps[10].points, final.points)
    assert np.all(snaps[0].points == -0.5)
    assert final.provenance["k"] == 10 and final.provenance["chains"] == 50


def test_run_chains_aborts_when_too_many_leave():
    m, p = orthant()
    with pytest.raises(DomainViolation):
        run_chains(m, p, SampleSet([[-0.05]]), 0.5, 20, 200, seed=1)


def test_run_chains_rejects_bad_init():
    m, p = orthant()
    with pytest.raises(DomainViolation):
        run_chains(m, p, SampleSet([[0.5]]), 0.01, 1, 1, seed=0)
    with pytest.raises(ValueError):
        run_chains(m, p, SampleSet([[-0.5]], "primal"), 0.01, 1, 1, seed=0)


def test_ula_stationary_variance():
    q = Quadratic(1)
    p = QuadraticGaussian(1.0)
    h = 0.2
    s = run_chains(q, p, SampleSet([[0.0]]), h, 200, 40000, seed=3)
    v = oracles.ula_stationary_variance(1.0, h)
    assert s.points.var() == pytest.approx(v, rel=0.03)


def test_orthant_chain_targets_gamma():
    m, p = orthant()
    s = run_chains(m, p, SampleSet([[-0.5]]), 0.002, 3000, 20000, seed=4)
    x = -1.0 / s.points[:, 0]
    assert x.mean() == pytest.approx(3.0, rel=0.05)


# -- Brownian paths ------------------------------------------------------
def test_path_is_regenerable_and_additive():
    path = BrownianPath(1, 1.0, 16, 2, batch=5, key=("k",))
    inc = path.increments
    assert inc.shape == (16, 5, 2)
    assert np.array_equal(path.increment(3), inc[3])
    assert np.allclose(path.aggregate(0, 16), inc.sum(axis=0))
    assert np.allclose(path.value(), path.aggregate(0, 7) + path.aggregate(7, 16))
    with pytest.raises(IndexError):
        path.increment(16)


def test_path_variance():
    path = BrownianPath(2, 0.5, 8, 1, batch=100000)
    assert path.value().var() == pytest.approx(0.5, rel=0.02)


def test_em_fine_linear_sde_matches_closed_form():
    # dY = -Y dt + sqrt(2) dW: EM with fine dt is an AR(1) we can sum exactly
    q = Quadratic(1)
    p = QuadraticGaussian(1.0)
    path = BrownianPath(3, 0.1, 64, 1)
    y = em_fine_reference(q, p, [1.0], path)
    inc = path.increments[:, 0]
    r = 1 - path.dt
    expect = r**64 + math.sqrt(2) * sum(r ** (63 - j) * inc[j] for j in range(64))
    assert y[0] == pytest.approx(expect, rel=1e-12)


def test_em_fine_converges_to_gbm_exact():
    g = Gbm1d(0.5)
    p = RelativeAffine(g, 1.0)
    path = BrownianPath(4, 0.05, 4096, 1, batch=2000)
    y = em_fine_reference(g, p, [1.0], path)
    exact = gbm_exact(1.0, 0.5, 0.05, path.value())
    assert np.sqrt(np.mean((y - exact) ** 2)) < 2e-3


def test_em_fine_records_and_nan_rows():
    m, p = orthant()
    path = BrownianPath(5, 2.0, 8, 1, batch=400)
    y, snaps = em_fine_reference(m, p, [-0.02], path, record=[0, 4, 8])
    assert set(snaps) == {0, 4, 8}
    assert np.isnan(y).any()
    with pytest.raises(DomainViolation):
        for s in range(50):
            em_fine_reference(m, p, [-0.02], BrownianPath(s, 2.0, 8, 1))


def test_gbm_exact_second_moment():
    w = math.sqrt(1.0) * stream(6, "w").standard_normal(400000)
    r = np.mean(gbm_exact(1.0, 0.5, 1.0, w) ** 2)
    assert r == pytest.approx(oracles.gbm_second_moment_ratio(0.5, 1.0), rel=0.02)
    assert oracles.gbm_second_moment_ratio(0.5, 1.0) == pytest.approx(oracles.FROZEN["gbm_ratio_a0.5_t1"], rel=1e-12)


# -- coupling ------------------------------------------------------------
def test_synchronous_pair_quadratic_is_deterministic_contraction():
    q = Quadratic(1)
    p = QuadraticGaussian(1.0)
    tr = synchronous_pair(q, p, [1.0], [0.0], 0.1, 10, seed=0, pairs=10)
    assert np.allclose(tr.sq_dist_mean, 0.9 ** (2 * np.arange(11)))
    assert np.allclose(tr.times, 0.1 * np.arange(11))


def test_synchronous_pair_orthant_multiplier():
    m, p = orthant()
    h = 0.01
    tr = synchronous_pair(m, p, [-1.0], [-0.5], h, 1, seed=1, pairs=200000)
    ratio = tr.sq_dist_mean[1] / tr.sq_dist_mean[0]
    assert ratio == pytest.approx(oracles.orthant_pair_multiplier(h), abs=4 * tr.sq_dist_sem[1] / 0.25)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, -0.1), st.floats(1e-3, 0.05), st.floats(-3, 3))
def test_orthant_step_stays_affine_in_y(y, h, z):
    # y' = y (1 - 2h - sqrt(2h) z) - h, so distinct starts differ by a common factor
    m, p = orthant()
    a = 1 - 2 * h - math.sqrt(2 * h) * z
    if y * a - h >= 0:
        return
    out = mla_step_dual(m, p, np.array([y]), h, np.array([z]))
    assert out[0] == pytest.approx(y * a - h, rel=1e-12, abs=1e-14)
