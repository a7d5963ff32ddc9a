# %% [markdown]
# Recovering a planted preference matrix
#
# Draw a clustered preference matrix, push it through the noisy channel and
# the erasure channel, then complete it with the user-clustering method and
# its hybrid variant. Well above the sufficient sampling rate both recover
# the planted matrix exactly.

# %%
import math

from richcf.algorithms import hucr, ucr
from richcf.synth import SynthConfig, generate_instance, thresholds

cfg = SynthConfig(U=300, M=300, K=3, p=0.9, beta=0.5, alpha=0.45)
th = thresholds(cfg)
print(f"alpha={cfg.alpha}, sufficient scale K ln M / M = {th.clustering_sufficient_alpha:.3f}")
print(f"expected observations {th.expected_observations:.0f}")

# %%
inst = generate_instance(cfg, seed=7)
B = inst.truth.dense()
print(f"observed {inst.observed.nnz} of {B.size} entries")

for name, out in (("ucr", ucr(inst.observed, cfg.user_cluster_size)),
                  ("hucr", hucr(inst.observed, cfg.user_cluster_size))):
    wrong = int((out.predictions != B).sum())
    print(f"{name}: {wrong} wrong entries")

# %% [markdown]
# Dropping the sparse rate far below the scale leaves too few co-ratings to
# tell clusters apart, and errors appear.

# %%
low = cfg.replace(alpha=0.02)
inst = generate_instance(low, seed=7)
out = ucr(inst.observed, low.user_cluster_size)
print(f"alpha={low.alpha}: {int((out.predictions != inst.truth.dense()).sum())} wrong entries")
print(f"at {low.alpha / th.clustering_sufficient_alpha:.2f} of the scale (ln M = {math.log(low.M):.2f})")
