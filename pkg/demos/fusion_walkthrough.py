"""
Forest votes, SVM probabilities, and the fused decision
=======================================================

Train on two synthetic buildings, tag the third, and compare the random
forest alone, the calibrated SVM ensemble alone, and the thresholded
combination of the two.
"""

import numpy as np

from uatag.evalreport import evaluate
from uatag.experiment import predictions
from uatag.features import apply_scaler
from uatag.fusion import FusionConfig, fuse, prepare_features
from uatag.modelstore import Reservoir, rows_from_corpus, train_scratch
from uatag.synthgen import generate_fleet
from uatag.vocab import load_vocabulary

vocab = load_vocabulary()
fleet = generate_fleet(3, seed=3)
for b in fleet:
    print(b.building_id, b.points[0].raw_name, sorted(b.labels[b.points[0].point_id]))

# %%
rows = [r for b in fleet[:2] for r in rows_from_corpus(b.corpus(), vocab)]
bundle = train_scratch(Reservoir(tuple(rows)), vocab)
print(len(rows), "training rows,", len(bundle.forest.trees), "trees")

# %%
held = fleet[2]
retained, X, filtered, windows = prepare_features(held.points, held.series)
Z = apply_scaler(bundle.scaler, X)
preds, prob = predictions(bundle, Z, retained, vocab, bundle.fusion)
truth = {p: held.labels[p] for p in retained}
for method in ("rf", "esc", "ua"):
    print(f"{method:>3}: micro-F1 {evaluate(preds[method], truth, vocab).micro_f1:.4f}")

# %%
# One point in detail: the forest's vote decides which threshold applies.
i = 0
pid = retained[i]
row = dict(zip(vocab.names, prob[i]))
print({p.point_id: p.raw_name for p in held.points}[pid], "truth:", sorted(truth[pid]))
for t in sorted(row, key=row.get, reverse=True)[:8]:
    print(f"  {t:<10} p={row[t]:.3f}  forest={'yes' if t in preds['rf'][pid] else 'no'}")

# %%
# Raising tau_high makes the ensemble need more confidence to overrule the forest.
for hi in (0.5, 0.7, 0.9):
    cfg = FusionConfig(0.15, hi)
    ua = predictions(bundle, Z, retained, vocab, cfg)[0]["ua"]
    print(f"tau_high={hi}: micro-F1 {evaluate(ua, truth, vocab).micro_f1:.4f}")

# %%
# Fusion on hand-made inputs: within the role group only the most probable tag survives.
rf = {t: False for t in vocab.names} | {"sensor": True}
esc = {t: 0.0 for t in vocab.names} | {"sensor": 0.4, "sp": 0.8}
for a in fuse(rf, esc, FusionConfig(), vocab):
    if a.probability > 0:
        print(a.tag, a.stage)
