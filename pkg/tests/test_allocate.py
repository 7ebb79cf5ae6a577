import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diagnostics import top_eps_oracle
from r2se import allocate as al
from r2se import policy as p
from r2se import tensor_nn as nn
from r2se.errors import ConfigError, InputError
from r2se.metrics import DifficultyScore


def _scores(values, prefix="c"):
    return [DifficultyScore(f"{prefix}{i:04d}", 0.0, 0.0, 0.0, float(v)) for i, v in enumerate(values)]


def test_select_hard_examples():
    rng = np.random.default_rng(0)
    s = _scores(rng.normal(size=1000))
    hard = al.select_hard(s, 1.0)
    assert hard.ids == top_eps_oracle([(x.clip_id, x.f_x) for x in s], 1.0) and len(hard.ids) == 10
    same = _scores([0.5] * 50)
    assert al.select_hard(same, 10.0).ids == [f"c{i:04d}" for i in range(5)]
    ramp = _scores(range(1, 101))
    assert sorted(al.select_hard(ramp, 50.0).ids) == [f"c{i:04d}" for i in range(50, 100)]
    assert all(x.f_x >= hard.threshold for x in hard.scores)


def test_select_hard_errors():
    with pytest.raises(ConfigError):
        al.select_hard(_scores([1.0]), 0.0)
    with pytest.raises(InputError):
        al.select_hard([], 5.0)


def test_select_hard_matches_sort_oracle_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        vals = rng.integers(0, 5, size=n) / 4.0
        eps = float(rng.uniform(0.5, 99.5))
        s = _scores(vals)
        order = rng.permutation(n)
        got = al.select_hard([s[i] for i in order], eps).ids
        assert got == top_eps_oracle([(x.clip_id, x.f_x) for x in s], eps)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=1, max_size=80), st.floats(1, 50), st.floats(0, 40))
def test_selection_is_monotone_in_eps(vals, eps, extra):
    s = _scores(vals)
    small = set(al.select_hard(s, eps).ids)
    large = set(al.select_hard(s, min(eps + extra, 99.0)).ids)
    assert small <= large


def test_rl_set_counts_and_determinism():
    hard = al.HardSet([f"t{i:03d}" for i in range(5)], [], 1.0, 5.0)
    train = [f"t{i:03d}" for i in range(100)]
    rl = al.build_rl_set(hard, train, L=3, seed=4)
    assert len(rl.groups) == 5
    for hid, group in zip(hard.ids, rl.groups):
        assert group[0] == hid and len(set(group)) == 4 and hid not in group[1:]
    assert al.build_rl_set(hard, train, L=3, seed=4).groups == rl.groups
    assert [g for g in al.build_rl_set(hard, train, L=0).groups] == [[h] for h in hard.ids]
    with pytest.raises(ConfigError):
        al.build_rl_set(hard, train[:3], L=3)


def test_score_dataset(corpus):
    vocab = p.build_vocabulary(corpus, 8, seed=0)
    data = p.prepare_dataset(corpus, vocab, noise_seed=1)
    w = nn.init_network(p.N_FEATURES, 16, 8, p.N_PERCEPTION, seed=0)
    evals = al.score_dataset(w, vocab, corpus, data.X, data.truths)
    f_per = [e.score.f_per for e in evals]
    assert max(f_per) == 1.0
    for e in evals:
        s = e.score
        assert abs(s.f_x - ((1 - s.f_plan) + 0.1 * s.f_per + 0.01 * s.f_ent)) < 1e-12
        if e.pdms == 0:
            assert s.f_x >= 1.0
    twice = al.score_dataset(w, vocab, corpus[:2] + corpus[:1], np.vstack([data.X[:2], data.X[:1]]),
                             np.vstack([data.truths[:2], data.truths[:1]]))
    assert twice[0].score.f_plan == twice[2].score.f_plan and twice[0].score.f_ent == twice[2].score.f_ent
    with pytest.raises(InputError):
        al.score_dataset(w, vocab, [], data.X[:0], data.truths[:0])


def test_hard_set_document_round_trip():
    hard = al.select_hard(_scores([0.3, 0.9, 0.1]), 50.0, "gid")
    back = al.HardSet.from_document(hard.document())
    assert back == hard
