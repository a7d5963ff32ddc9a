# %% [markdown]
# Similarity statistics and their expectations
#
# Co-rating counts, similarities and normalized similarities for one small
# pair, then a Monte Carlo check of the closed-form expected similarity for
# each of the six observation cases.

# %%
import numpy as np

from richcf import RatingMatrix
from richcf.similarity import co_rating, normalized_similarity, similarity
from richcf.synth import SynthConfig, agreement_noise, expected_similarity, generate_instance

r = RatingMatrix.from_dense([[1, 0, 2, 1, 0], [1, 2, 2, 2, 0]], levels=2)
print("phi", co_rating(r, 0, 1), "sigma", similarity(r, 0, 1),
      "normalized", normalized_similarity(r, 0, 1))

# %%
p, G = 0.9, 2
z1, z2 = agreement_noise(p, G)
print(f"z1={z1:.4f} z2={z2:.4f} gap={z1 - z2:.4f} = {(p - (1 - p) / (G - 1)) ** 2:.4f}")

# %% [markdown]
# Users 0, 1, 20 and 21 are rich. Pairs below cover same or different
# clusters with rich or sparse endpoints.

# %%
cfg = SynthConfig(U=40, M=40, K=2, G=2, p=0.9, alpha=0.3, beta=0.7)
pairs = [(1, 0, 1), (2, 0, 2), (3, 0, 20), (4, 0, 22), (5, 2, 3), (6, 2, 22)]
got = {c: [] for c, _, _ in pairs}
want = {c: [] for c, _, _ in pairs}
for i in range(300):
    inst = generate_instance(cfg, seed=i)
    B = inst.truth.dense()
    for case, u, v in pairs:
        got[case].append(similarity(inst.observed, u, v))
        want[case].append(expected_similarity(case, cfg, float(np.mean(B[u] == B[v])))[1])
for case, _, _ in pairs:
    g = np.asarray(got[case])
    print(f"case {case}: mean {g.mean():7.3f}  closed form {np.mean(want[case]):7.3f}"
          f"  se {g.std(ddof=1) / np.sqrt(len(g)):.3f}")
