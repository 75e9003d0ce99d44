"""Hand-built trajectories for diagnostics tests."""

from reasoning_entropy.rollout import CheckpointEstimate, EntropyTrajectory
from reasoning_entropy.traces import NULL, AnswerLabel, empirical_distribution

GOLD = AnswerLabel("numeric", "1")
_DIST = empirical_distribution([NULL], 0.5, GOLD)


def make_traj(h, s=None, correct=True, positions=None, qid="q0", idx=0, group=("m", "d")):
    s = list(h) if s is None else list(s)
    positions = list(range(len(h))) if positions is None else list(positions)
    cps = [CheckpointEstimate(k, float(a), float(b), _DIST) for k, a, b in zip(positions, h, s)]
    return EntropyTrajectory(qid, idx, cps, 16, correct, GOLD,
                             group={"model_tag": group[0], "dataset_tag": group[1]})
