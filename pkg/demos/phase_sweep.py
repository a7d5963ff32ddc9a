# %% [markdown]
# Exact-recovery phase transition
#
# Sweep the sparse observation rate across multiples of K ln M / M and count
# how often the user-clustering method recovers the planted matrix. The same
# sweep is available from the command line as ``richcf sweep``.

# %%
import math

import numpy as np

from richcf.evaluation import phase_sweep, summarize_sweep
from richcf.synth import SynthConfig

cfg = SynthConfig(U=300, M=300, K=3, p=0.9, beta=0.6, alpha=0.1)
scale = cfg.K * math.log(cfg.M) / cfg.M
multiples = np.linspace(0.5, 8, 6)
rows = phase_sweep(cfg, "alpha", (multiples * scale).tolist(), trials=10, seed=0)

# %%
for m, (alpha, frac, n) in zip(multiples, summarize_sweep(rows)):
    bar = "#" * int(round(20 * frac))
    print(f"{m:4.2f} x scale  alpha={alpha:.4f}  {frac:4.2f} {bar}")
