import numpy as np
import pytest

import bernoulli
import nig
from errors import DomainError
from errors import SchemaMismatch
from uvalues import Provenance
from uvalues import Role
from uvalues import UDraw
from uvalues import UDrawSet
from uvalues import clamp_unit
from uvalues import data_label
from uvalues import ecdf
from uvalues import group_columns
from uvalues import is_data
from uvalues import is_param
from uvalues import param_label
from uvalues import select_uvalues
from uvalues import tilted_ecdf


def _drawset(T=3, n=4):
    labels = [param_label("mu")] + [data_label("y", i, group=i % 2) for i in range(n)]
    values = np.linspace(0.1, 0.9, T * (n + 1)).reshape(T, n + 1)
    return UDrawSet("toy", tuple(labels), values, Provenance(sampler="test"))


def test_clamp_unit():
    assert clamp_unit(0.0) == 1e-12
    assert clamp_unit(1.0) == 1 - 1e-12
    assert clamp_unit(0.25) == 0.25
    np.testing.assert_array_equal(clamp_unit(np.array([0.0, 0.5])), [1e-12, 0.5])
    with pytest.raises(DomainError):
        clamp_unit(np.nan)
    with pytest.raises(DomainError):
        clamp_unit(0.5, eps=0.0)


def test_ecdf():
    values = [0.2, 0.4, 0.4, 0.9]
    np.testing.assert_allclose(ecdf(values, [0.0, 0.4, 0.5, 1.0]), [0.0, 0.75, 0.75, 1.0])
    with pytest.raises(DomainError):
        ecdf([], [0.5])
    with pytest.raises(DomainError):
        ecdf(values, [0.5, 0.1])


def test_tilted_ecdf_vanishes_at_the_ends():
    curve = tilted_ecdf(np.random.default_rng(1).uniform(size=50))
    assert curve.grid.size == 512
    assert curve.values[0] == 0.0
    assert curve.values[-1] == 0.0
    assert np.all(np.abs(curve.values) <= 1)
    with pytest.raises(DomainError):
        tilted_ecdf([0.5], grid=[0.0, 1.5])


def test_labels_must_be_unique():
    with pytest.raises(SchemaMismatch):
        UDraw(np.array([0.5, 0.5]), (param_label("mu"), param_label("mu")))


def test_udraw_rejects_closed_interval():
    with pytest.raises(DomainError):
        UDraw(np.array([0.0, 0.5]), (param_label("mu"), data_label("y", 0)))
    with pytest.raises(DomainError):
        UDraw(np.array([0.5]), (param_label("mu"), data_label("y", 0)))


def test_drawset_views():
    ds = _drawset()
    assert (ds.T, ds.D) == (3, 5)
    assert len(ds) == 3
    np.testing.assert_array_equal(ds.column("mu"), ds.values[:, 0])
    assert ds.block(is_data).shape == (3, 4)
    assert ds.block(is_param).shape == (3, 1)
    assert ds.head(2).T == 2
    assert [d.D for d in ds] == [5, 5, 5]
    with pytest.raises(SchemaMismatch):
        ds.column("sigma")


def test_select_and_group():
    ds = _drawset()
    picked = select_uvalues(ds.draw(0), is_data)
    assert [lab.index for (_, lab) in picked] == [0, 1, 2, 3]
    assert all(lab.role is Role.DATA for (_, lab) in picked)

    groups = group_columns(ds, lambda lab: lab.strata.get("group"))
    assert groups[0].shape == (3, 2)
    assert groups[1].shape == (3, 2)
    assert groups[None].shape == (3, 1)


def test_nig_forward_backward(rng):
    model = nig.NigModel(10, nig.weak_prior())
    (u, theta, y) = model.forward(rng)
    recovered = model.uvalues(theta, y, rng)
    np.testing.assert_allclose(recovered.values, u, atol=1e-8)
    assert recovered.labels == model.labels


def test_beta_bernoulli_forward_backward(rng):
    model = bernoulli.BetaBernoulliModel(20, bernoulli.PRIORS["jeffreys"])
    (u, theta, y) = model.forward(rng)
    recovered = model.uvalues(theta, y, rng)
    assert recovered.values[0] == pytest.approx(u[0], abs=1e-8)
    # stochastic data recovery still reproduces the data exactly
    np.testing.assert_array_equal(model.sample_data(recovered.values[1:], theta), y)


def test_discrete_theta_recovery_stays_in_its_half(rng):
    model = bernoulli.DiscreteThetaBernoulli(15)
    for _ in range(20):
        (u, theta, y) = model.forward(rng)
        recovered = model.uvalues(theta, y, rng).values
        assert (recovered[0] < 0.5) == (u[0] < 0.5)
        np.testing.assert_array_equal(model.sample_theta(recovered[:1]), theta)
        np.testing.assert_array_equal(model.sample_data(recovered[1:], theta), y)


def test_udrawset_is_seeded():
    data = np.array([1.0, 2.0, 0.5, 1.5])
    model = nig.NigModel(4, nig.weak_prior())
    a = model.udrawset(data, T=5, seed=3, dataset_id="a")
    b = model.udrawset(data, T=5, seed=3, dataset_id="a")
    np.testing.assert_array_equal(a.values, b.values)
    assert a.values.shape == (5, 6)
    assert a.provenance.seed == 3
    assert a.provenance.sampler == "NigModel"
    (thetas, c) = model.posterior_udrawset(data, T=5, seed=3)
    assert thetas.shape == (5, 2)
    np.testing.assert_array_equal(c.values, a.values)


def test_udrawset_checks_inputs():
    model = nig.NigModel(3, nig.weak_prior())
    with pytest.raises(DomainError):
        model.udrawset(np.zeros(3), T=0, seed=0)
    with pytest.raises(SchemaMismatch):
        model.udrawset(np.zeros(4), T=1, seed=0)
