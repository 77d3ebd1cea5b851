"""Smoke test for the `hfr` extension module."""

import math
import tempfile

import hfr


def main():
    fam = hfr.TaskFamily("four-corners")
    assert (fam.obs_dim, fam.action_dim, fam.horizon) == (2, 2, 20)
    assert fam.num_tasks() == 4
    assert fam.reward_and_done(1, [0.8, 0.8], [0.1, 0.1], [0.9, 0.9]) == (0.0, True)
    assert fam.reward_and_done(1, [0.4, 0.4], [0.1, 0.1], [0.5, 0.5]) == (-3.0, False)
    assert fam.step([0.0, 0.0], [0.3, 0.0]) == [0.1, 0.0]

    probs = hfr.relabel_distribution([math.log(3.0), 0.0], [0.0, 0.0], [0.5, 0.5])
    assert abs(probs[0] - 0.75) < 1e-12 and abs(probs[1] - 0.25) < 1e-12
    assert abs(hfr.log_mean_exp([0.0, 0.0, 0.0])) < 1e-15

    agent = hfr.Agent("four-corners", seed=1, hidden=[16, 16])
    mean, var = agent.posterior([])
    assert mean == [0.0] * agent.latent_dim and var == [1.0] * agent.latent_dim
    traj = agent.collect(2)
    assert 1 <= len(traj) <= 20
    assert abs(fam.discounted_return(traj, 2) - sum(0.9**i * t[2] for i, t in enumerate(traj))) < 1e-12
    ret, success = agent.meta_test(0, k=2)
    assert isinstance(success, bool) and ret <= 0.0
    with tempfile.TemporaryDirectory() as d:
        agent.save(d)
        agent.load(d)

    rows = hfr.train("four-corners", "none", 0, steps=200, eval_interval=100, hidden=[8])
    assert [r["env_steps"] for r in rows] == [100, 200]
    counts = rows[-1]["relabel_counts"]
    assert all(counts[i][j] == 0 for i in range(4) for j in range(4) if i != j)

    checks = hfr.verify()
    assert checks and all(passed for _, passed, _ in checks), checks
    text = "states 1\nactions 1\ntasks 1\ngamma 0.5\nhorizon inf\ninitial 1\nprior 1\ntransition 0 0 1\nreward 0 0 0 1\n"
    assert abs(hfr.tabular_optimal_value(text, 0) - 2.0) < 1e-9
    print("smoke test ok")


if __name__ == "__main__":
    main()
