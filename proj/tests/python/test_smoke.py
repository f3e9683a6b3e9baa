import math

import pytest

import thoughtmdp as tm


def test_chain_policy_iteration_converges_without_thinking():
    build = tm.build_chain(10, 0.9)
    assert tm.validate(build.mdp).ok()

    res = tm.policy_iteration(build.mdp, build.init_policy,
                              tie_break=tm.TieBreak.PreferIncumbent)
    assert res.converged
    assert res.iterations <= 10
    assert tm.verify_no_thought_optimal(build.mdp, res.policy)
    for s in range(9):
        for tau in range(2):
            assert res.values.at(s, tau) == pytest.approx(0.9 ** (8 - s), abs=1e-8)


def test_step_semantics():
    build = tm.build_chain(10, 0.9)
    nxt, reward, done = tm.step(build.mdp, tm.JointState(3, 0),
                                tm.ActionRef(tm.ActionKind.Thought, 0), seed=1)
    assert (nxt.env, nxt.thought) == (3, 1)
    assert reward == 0.0
    assert not done


def test_horizon_bound():
    expected = 1 + math.log(math.log(20.0) / 0.5) / math.log(4.0)
    assert tm.horizon_bound(4, 10, 0.5) == pytest.approx(expected, rel=1e-12)
    assert tm.horizon_bound(4, 10, 0.0) is None
    rec = tm.proposition2_compare(0.1, 0.9, 0.5)
    assert rec["reduced"]
    assert rec["bound_with"] < rec["bound_without"]


def test_grid_ops_and_play_rollout():
    assert tm.optimal_move(tm.GridPos(0, 0), tm.GridPos(4, 4)) == "down"
    assert tm.grid_step(tm.GridPos(2, 2), "right") == tm.GridPos(2, 3)
    assert tm.grid_step(tm.GridPos(3, 1), "A") == tm.GridPos(3, 1)

    ep = tm.play_rollout(seed=5, length=40, start=tm.GridPos(2, 2))
    assert ep.length == 40
    names = {tm.GridAction.A, tm.GridAction.B}
    pos = ep.steps[0].pos
    for st in ep.steps:
        assert st.pos == pos
        assert st.action != tm.GridAction.C
        pos = tm.grid_step(pos, st.action)
    assert any(st.action in names for st in ep.steps)


def test_policy_net_roundtrip_and_sampling(tmp_path):
    cfg = tm.PolicyNetConfig()
    cfg.width = 16
    cfg.blocks = 1
    cfg.heads = 2
    cfg.ffn = 32
    net = tm.PolicyNet.init(cfg, seed=3)
    tokens = tm.encode_history("C", [], tm.GridPos(2, 2))
    logits = net.forward_last(tokens)
    assert len(logits) == 7

    path = str(tmp_path / "model.tmdpnet")
    net.save(path)
    net2 = tm.PolicyNet.load(path)
    assert net2.forward_last(tokens) == logits

    masked = tm.mask_thought(list(logits))
    assert masked[:4] == logits[:4]
    assert all(masked[k] < -1e8 for k in (4, 5, 6))

    spec = tm.RolloutBatchSpec()
    spec.cue = "C"
    spec.cap = 12
    spec.episode_seeds = [1, 2, 3]
    eps = tm.sample_episodes(net, spec)
    assert len(eps) == 3
    assert all(len(e.steps) <= 12 for e in eps)
