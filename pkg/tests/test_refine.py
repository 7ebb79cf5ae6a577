import numpy as np
import pytest

from diagnostics import finite_diff_check
from r2se import adapters as ad
from r2se import metrics as m
from r2se import policy as p
from r2se import refine as r
from r2se import tensor_nn as nn
from r2se.errors import InputError, NumericError


def _signals(rewards, costs):
    rewards, costs = np.asarray(rewards, float), np.asarray(costs, float)
    return r.ProcessSignals("c", rewards, costs, np.zeros((len(rewards), 5)))


def test_loss_examples():
    sig = _signals([1.0, 0.0], [0.0, 0.0])
    loss, _ = r.grpo_loss_heads(np.zeros(2), [0.5, 0.5], sig)
    assert abs(loss - 0.6931) < 1e-4
    assert r.grpo_loss_heads(np.zeros(3), [1 / 3] * 3, _signals([0] * 3, [0] * 3))[0] == 0.0
    z = np.array([0.3, -0.2, 1.0])
    sig = _signals([0.2, 0.9, 0.1], [1.0, 0.0, 2.0])
    l0 = r.grpo_loss_heads(z, [1 / 3] * 3, sig, lam=0.0)[0]
    l1 = r.grpo_loss_heads(z, [1 / 3] * 3, sig, lam=1.0)[0]
    l3 = r.grpo_loss_heads(z, [1 / 3] * 3, sig, lam=3.0)[0]
    assert abs((l3 - l0) - 3 * (l1 - l0)) < 1e-12


def test_importance_weight_examples():
    assert r.importance_weight(0.4, 0.2) == 2.0
    assert r.importance_weight(0.9, 1e-6, (0.8, 1.25)) == 1.25
    assert r.importance_weight(1e-6, 0.9, (0.8, 1.25)) == 0.8
    assert np.allclose(r.importance_weight([0.5, 0.5], [0.5, 0.5]), 1.0)
    with pytest.raises(NumericError):
        r.importance_weight(0.5, 0.0)
    with pytest.raises(InputError):
        r.RefineConfig(is_clamp=(2.0, 3.0))


def test_grpo_gradient_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(25):
        M = int(rng.integers(2, 9))
        z = {"z": rng.normal(size=M)}
        gen = nn.softmax(rng.normal(size=M))
        sig = _signals(rng.uniform(size=M), rng.uniform(0, 3, size=M))
        w = r.importance_weight(nn.softmax(z["z"]), gen, (0.8, 1.25))
        kw = dict(lam=float(rng.uniform(0, 10)), baseline=bool(trial % 2), is_weights=w)
        _, g = r.grpo_loss_heads(z["z"], gen, sig, **kw)
        report = finite_diff_check(lambda: r.grpo_loss_heads(z["z"], gen, sig, **kw)[0], z, {"z": g})
        assert report.passed, report


def test_process_signals(corpus):
    vocab = p.build_vocabulary(corpus, 8, seed=0)
    clip = corpus[0]
    sig = r.process_signals(clip, vocab)
    _, ref = m.privileged_reference(clip)
    for j in range(len(vocab)):
        one = r.process_signals(clip, vocab[j:j + 1])
        assert one.rewards[0] == sig.rewards[j] and one.costs[0] == sig.costs[j]
    assert np.allclose(sig.costs, (1 - sig.breakdown).sum(1))
    assert np.all((sig.rewards >= 0) & (sig.rewards <= 1))
    for c in corpus[:2]:
        expert = r.process_signals(c, p.ego_frame_expert(c)[None])
        assert expert.rewards[0] == 1.0 and expert.costs[0] == 0.0


def test_collision_candidate_scores_zero():
    from r2se import world as w
    clip = w.generate_scenario(w.ScenarioSpec("static_obstacle", {"lateral_offset": 0.0}, 2))
    ram = np.zeros((clip.future_len, 3))
    ram[:, 0] = np.arange(1, clip.future_len + 1) * 10.0
    sig = r.process_signals(clip, ram[None])
    assert sig.rewards[0] == 0.0 and sig.costs[0] >= 1.0 and sig.breakdown[0, 0] == 0.0


@pytest.fixture(scope="module")
def setup(corpus):
    vocab = p.build_vocabulary(corpus, 8, seed=0)
    data = p.prepare_dataset(corpus, vocab, noise_seed=1)
    base = nn.init_network(p.N_FEATURES, 16, 8, p.N_PERCEPTION, seed=0)
    ids = [c.id for c in corpus[:6]]
    clips = {c.id: c for c in corpus[:6]}
    X = {c.id: data.X[i] for i, c in enumerate(corpus[:6])}
    tg = {c.id: data.targets[i] for i, c in enumerate(corpus[:6])}
    tr = {c.id: data.truths[i] for i, c in enumerate(corpus[:6])}
    rl = r.prepare_rl_data(base, vocab, clips, X, tg, tr)
    return base, ids, rl


def test_zero_epochs_unchanged(setup):
    base, ids, rl = setup
    ens = ad.init_ensemble(base, K=2, r=2, seed=0)
    out, history = r.refine_specialists(base, ens, [[i] for i in ids], rl, r.RefineConfig(epochs=0))
    assert out.id == ens.id and history.epochs == []


def test_refinement_moves_mass_to_best_candidate(setup):
    base, ids, rl = setup
    cid = ids[2]
    before = nn.weights_to_document(base)
    ens = ad.init_ensemble(base, K=3, r=2, seed=0)
    cfg = r.RefineConfig(lam=1.0, alpha_pretrain=0.0, is_clamp=(0.8, 1.25), epochs=40, lr=0.3,
                         optimizer="adam")
    out, history = r.refine_specialists(base, ens, [[cid]], rl, cfg)
    best = int(np.argmax(rl.signals[cid].rewards - rl.signals[cid].costs))
    mean, _ = ad.ensemble_forward(base, out, rl.X[cid])
    assert mean[best] > rl.gen_probs[cid][best]
    assert history.epochs[-1]["mean_reward"] > history.epochs[0]["mean_reward"] - 1e-9
    assert nn.weights_to_document(base) == before


def test_null_objective_leaves_adapters(setup):
    base, ids, rl = setup
    ens = ad.init_ensemble(base, K=2, r=2, seed=0)
    for mbr in ens.members:
        mbr["plan_head"].B += 0.1
    cfg = r.RefineConfig(lam=0.0, alpha_pretrain=0.0, reward_scale=0.0, epochs=2, lr=0.5)
    out, _ = r.refine_specialists(base, ens, [[i] for i in ids], rl, cfg)
    assert out.id == ens.id


def test_full_fine_tune_touches_only_planning(setup):
    base, ids, rl = setup
    cfg = r.RefineConfig(epochs=2, lr=0.05)
    tuned, history = r.refine_full(base, [[i] for i in ids], rl, cfg)
    assert len(history.epochs) == 2
    for k in base.params:
        same = np.array_equal(tuned.params[k], base.params[k])
        assert same == (k.split(".")[0] not in nn.PLANNING_LAYERS)
