"""
Ablation and rank statistics
============================

Run the three solver variants on a few planted tasks, then summarise the
comparison with the Friedman statistic and the Nemenyi critical difference.
"""
# %%
import numpy as np

from bhdg.experiment import ablation_wins, run_ablation
from bhdg.metrics import HIGHER_IS_BETTER
from bhdg.solver import HyperParams
from bhdg.stats import RankTable, average_ranks, friedman, nemenyi_cd
from bhdg.synthetic import planted_task

hp = HyperParams(lambda1=10, lambda2=0.01, lambda3=1, rho0=0.25, hash_coupling=300)
tasks = [planted_task(seed=s)[0] for s in range(6)]
rows = run_ablation(tasks, hp, seeds=(0,), fraction=0.1)
for name, wins in ablation_wins(rows).items():
    print(name, wins)

# %%
# Average precision table: datasets x variants, ranked per dataset.
variants = ["bhdg", "bhdg1", "bhdg2"]
values = [[next(r.ap for r in rows if r.dataset == t.name and r.variant == v) for v in variants]
          for t in tasks]
table = RankTable(variants, [t.name for t in tasks], values, HIGHER_IS_BETTER["ap"])
ranks = average_ranks(table)
chi2, ff = friedman(ranks, len(tasks))
print("average ranks:", {v: round(float(r), 2) for v, r in zip(variants, ranks)})
print(f"chi2={chi2:.3f}  F_F={ff:.3f}  CD(0.05)={nemenyi_cd(len(variants), len(tasks)):.3f}")
