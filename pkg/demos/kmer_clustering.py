"""
Grouping point names by k-mer similarity
========================================

Point names from one building tend to follow a house convention, so names
that share ordered substrings usually describe the same kind of point. This
walk-through clusters a handful of names and then flags the member whose
tags disagree with its neighbours.
"""

import numpy as np

from uatag.namecluster import (
    cluster_names,
    clustered_order,
    kmerize,
    normalized_similarity,
    outlier_scores,
    similarity_matrix,
)

# %%
# A k-mer decomposition keeps order: position matters when two names are compared.
print(kmerize("SP_COOL", 3).kmers)
a, b = kmerize("SP_COOL", 3), kmerize("SP_HEAT", 3)
print("SP_COOL vs SP_HEAT:", normalized_similarity(a, b))

# %%
names = {
    "p1": "RTU1_UNOCC_CLG_SP_MAX",
    "p2": "RTU2_UNOCC_CLG_SP_MAX",
    "p3": "RTU3_UNOCC_CLG_SP_MAX",
    "p4": "RTU1_ZN_T",
    "p5": "RTU2_ZN_T",
    "p6": "RTU1_SF_CMD",
}
seqs = [kmerize(n, 4, pid) for pid, n in names.items()]
clusters = cluster_names(seqs, threshold=0.45)
for c in clusters:
    print(c.id, c.members, round(c.mean_similarity, 3))

# %%
# The similarity matrix in clustered order shows the block structure.
order = clustered_order(clusters)
pos = {s.point_id: i for i, s in enumerate(seqs)}
S = similarity_matrix(seqs)[np.ix_([pos[p] for p in order], [pos[p] for p in order])]
np.set_printoptions(precision=2, suppress=True)
print(order)
print(S)

# %%
# p3 was tagged without "cooling" and "unocc". Its outlier score stands out.
shared = {"sp", "temp", "air", "zone", "cooling", "unocc", "max", "point", "writable"}
tags = {pid: set(shared) for pid in ("p1", "p2", "p3")}
tags["p3"] -= {"cooling", "unocc"}
tags |= {"p4": {"sensor", "temp", "zone"}, "p5": {"sensor", "temp", "zone"}, "p6": {"cmd", "fan"}}
for r in outlier_scores(clusters, tags):
    print(r.cluster_id, r.point_id, round(r.outlier_score, 3), "FLAG" if r.flagged else "")
