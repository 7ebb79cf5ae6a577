import numpy as np
import pytest

from diagnostics import finite_diff_check, forward_loops
from r2se import adapters as ad
from r2se import tensor_nn as nn
from r2se.errors import ConfigError, IntegrityError, ShapeError


@pytest.fixture
def base():
    return nn.init_network(6, 10, 7, 3, seed=1)


def test_zero_init_identity(base):
    X = np.random.default_rng(0).normal(size=(100, 6))
    ens = ad.init_ensemble(base, K=4, r=3, seed=0)
    ref = nn.softmax(nn.forward(base, X)[0])
    for member in ens.members:
        assert np.max(np.abs(nn.softmax(ad.adapted_forward(base, member, X)[0]) - ref)) == 0
    mean, u = ad.ensemble_forward(base, ens, X)
    assert np.all(u == 0) and np.max(np.abs(mean - ref)) < 1e-15


def test_members_differ_and_b_is_zero(base):
    ens = ad.init_ensemble(base, K=3, r=2, seed=5)
    As = [m["plan_hidden"].A for m in ens.members]
    assert not np.array_equal(As[0], As[1]) and not np.array_equal(As[1], As[2])
    assert all(np.all(m[layer].B == 0) for m in ens.members for layer in ens.layers)
    assert abs(np.std(np.concatenate([a.ravel() for a in As])) - ad.INIT_STD) < 0.005


def test_rank_bound(base):
    with pytest.raises(ConfigError):
        ad.init_ensemble(base, K=1, r=8, seed=0)


def test_hand_delta():
    pair = ad.LoraPair(np.array([[1.0], [0.0]]), np.array([[0.0, 2.0]]), 1)
    assert np.array_equal(pair.delta(), [[0, 2], [0, 0]])
    w = nn.init_network(2, 2, 2, 1, seed=0)
    x = np.array([0.3, 0.9])
    got, _ = nn.forward(w, x, adapters={"plan_head": pair})
    ref, _ = forward_loops(w.params, x, adapters={"plan_head": pair})
    assert np.allclose(got, ref, atol=1e-12)


def test_adapter_gradients(base):
    rng = np.random.default_rng(2)
    ens = ad.init_ensemble(base, K=1, r=2, seed=0)
    member = ens.members[0]
    for pair in member.values():
        pair.B = rng.normal(0, 0.3, size=pair.B.shape)
    X = rng.normal(size=(3, 6))
    y = np.array([0, 4, 2])

    def loss():
        return float(-nn.log_softmax(nn.forward(base, X, adapters=member)[0])[np.arange(3), y].sum())

    logits, _, cache = nn.forward_cached(base, X, adapters=member)
    d = nn.softmax(logits)
    d[np.arange(3), y] -= 1
    grads = nn.backward(base, cache, d, adapters=member)
    assert set(grads) == {f"{layer}.{p}" for layer in member for p in "AB"}
    assert finite_diff_check(loss, ad.member_params(member), grads).passed


def test_ensemble_forward_two_members(base):
    rng = np.random.default_rng(3)
    ens = ad.init_ensemble(base, K=2, r=2, seed=0)
    for m in ens.members:
        m["plan_head"].B = rng.normal(size=m["plan_head"].B.shape)
    x = rng.normal(size=6)
    P = [nn.softmax(ad.adapted_forward(base, m, x)[0]) for m in ens.members]
    mean, u = ad.ensemble_forward(base, ens, x)
    mid = (P[0] + P[1]) / 2
    assert np.allclose(mean, mid)
    assert np.isclose(u, (((P[0] - mid) ** 2 + (P[1] - mid) ** 2) / 2).mean())
    swapped = ad.AdapterEnsemble(ens.members[::-1], ens.rank, ens.layers)
    m2, u2 = ad.ensemble_forward(base, swapped, x)
    assert np.allclose(m2, mean) and np.isclose(u2, u)


def test_ensemble_step(base):
    ens = ad.init_ensemble(base, K=1, r=2, seed=0)
    before = nn.weights_to_document(base)
    zero = [{k: np.zeros_like(v) for k, v in ad.member_params(ens.members[0]).items()}]
    same = ad.ensemble_step(ens, zero, 0.5)
    assert all(np.array_equal(same.members[0][l].A, ens.members[0][l].A) for l in ens.layers)
    g = {k: np.ones_like(v) for k, v in ad.member_params(ens.members[0]).items()}
    step = ad.ensemble_step(ens, [g], 0.5)
    assert np.allclose(step.members[0]["plan_head"].A, ens.members[0]["plan_head"].A - 0.5)
    two = ad.init_ensemble(base, K=2, r=2, seed=0)
    halved = ad.ensemble_step(two, [g, g], 0.5)
    assert np.allclose(halved.members[1]["plan_head"].B, -0.25)
    assert nn.weights_to_document(base) == before
    with pytest.raises(ShapeError):
        ad.ensemble_step(two, [g], 0.5)


def test_parameter_counts():
    base = nn.init_network(29, 256, 64, 8, seed=0)
    ens = ad.init_ensemble(base, K=6, r=16, seed=0)
    assert ens.trainable_count() == ad.adapter_count(base, 6, 16) == 6 * 16 * (512 + 320)
    per_member = ad.adapter_count(base, 1, 16)
    assert per_member < ad.base_layer_count(base) / 6


def test_document_round_trip_and_base_check(base):
    ens = ad.init_ensemble(base, K=2, r=2, seed=0, base_id="abc")
    doc = ens.document()
    back = ad.AdapterEnsemble.from_document(doc, expected_base_id="abc")
    assert back.id == ens.id
    with pytest.raises(IntegrityError, match="abc"):
        ad.AdapterEnsemble.from_document(doc, expected_base_id="xyz")
    with pytest.raises(ConfigError):
        ad.AdapterEnsemble.from_document({**doc, "format_version": 2})
