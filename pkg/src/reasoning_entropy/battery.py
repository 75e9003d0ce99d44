"""End-to-end diagnostics on batteries of seeded synthetic worlds.

Each world is wrapped in a synthetic backend; questions, traces and rollouts
run through the same engine used for live models, then the trajectories
from all seeds are pooled for the battery statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import diagnostics as dg
from .config import ALIGNED_PRESET, MISALIGNED_PRESET, RunConfig
from .pipeline import MC_FIDELITY_N, MC_FIDELITY_STRIDE, build_backend, load_questions
from .rollout.engine import EntropyTrajectory, evaluate_trace, generate_trajectories, plan_checkpoints


@dataclass
class BatteryConfig:
    kind: str = "aligned"              # aligned | misaligned
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n_questions: int = 8
    M: int = 4
    N: int = 64
    shuffle: bool = False
    mc_fidelity: bool = False
    world_overrides: dict = field(default_factory=dict)

    def run_config(self, seed: int) -> RunConfig:
        preset = dict(ALIGNED_PRESET if self.kind == "aligned" else MISALIGNED_PRESET)
        preset.update(self.world_overrides, seed=seed)
        cfg = RunConfig(M=self.M, N=self.N, seed=seed, model_tag=f"{self.kind}-world",
                        dataset_tag="oracle", max_in_flight=1)
        cfg.backend.world = preset
        cfg.dataset = replace(cfg.dataset, n_questions=self.n_questions)
        return cfg.validate()


@dataclass
class BatteryResult:
    config: BatteryConfig
    original: list[EntropyTrajectory]
    shuffled: list[EntropyTrajectory]
    mc_fidelity: list[EntropyTrajectory]

    @staticmethod
    def _mean_rho(trajs: Sequence[EntropyTrajectory]) -> float:
        vals = [r.rho for r in map(dg.sia_alignment, trajs) if r.defined]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_rho(self) -> float:
        return self._mean_rho(self.original)

    @property
    def shuffled_mean_rho(self) -> float:
        return self._mean_rho(self.shuffled)

    @property
    def mc_fidelity_mean_rho(self) -> float:
        return self._mean_rho(self.mc_fidelity)

    def auc(self, s: float = 0.5) -> tuple[float, int, int]:
        return dg.auc_at_prefix(self.original, s)

    def plateau(self) -> tuple[float, float]:
        """(fraction of traces with a plateau, mean plateau level)."""
        reps = [dg.saturation_detect(t) for t in self.original]
        levels = [r.plateau_level for r in reps if r.plateau_detected]
        return float(np.mean([r.plateau_detected for r in reps])), float(np.mean(levels)) if levels else math.nan

    def summary(self) -> dict:
        auc, n1, n0 = self.auc(0.5)
        rate, level = self.plateau()
        out = {"kind": self.config.kind, "traces": len(self.original), "mean_rho": self.mean_rho,
               "auc_0.5": auc, "n_correct": n1, "n_incorrect": n0, "plateau_rate": rate,
               "plateau_level": level}
        if self.shuffled:
            out["shuffled_mean_rho"] = self.shuffled_mean_rho
        if self.mc_fidelity:
            out["mc_fidelity_mean_rho"] = self.mc_fidelity_mean_rho
        return out


def run_battery(bc: BatteryConfig) -> BatteryResult:
    orig, shuf, mcf = [], [], []
    for seed in bc.seeds:
        cfg = bc.run_config(seed)
        backend = build_backend(cfg)
        for q in load_questions(cfg, backend):
            for tr in generate_trajectories(backend, q, cfg.M, cfg.decoding, seed, cfg.stride):
                if tr.failed:
                    continue
                kw = dict(params=cfg.decoding, seed=seed, alpha_entropy=cfg.alpha_entropy,
                          alpha_surprisal=cfg.alpha_surprisal, group=cfg.group)
                base = evaluate_trace(backend, q, tr, cfg.N, **kw)
                orig.append(base)
                if bc.shuffle:
                    shuf.append(evaluate_trace(backend, q, tr, cfg.N, positions=base.positions, shuffle=True,
                                               variant="shuffle", **kw))
                if bc.mc_fidelity:
                    pos = plan_checkpoints(len(tr.tokens), MC_FIDELITY_STRIDE).positions
                    mcf.append(evaluate_trace(backend, q, tr, MC_FIDELITY_N, positions=pos,
                                              variant="mc_fidelity", **kw))
    return BatteryResult(bc, orig, shuf, mcf)
