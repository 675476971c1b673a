"""How summaries are scored: concept overlap plus bipartite matching.

Walks the metric from its parts (per-shot concept IoU, maximum-weight
matching) to the per-video and averaged precision/recall/F1 table.
"""

import numpy as np

from chansum.evaluation import (
    brute_force_matching,
    concept_iou,
    evaluate_dataset,
    evaluate_summary,
    format_metrics_table,
    max_weight_matching,
)

print("== concept IoU between shots ==")
pairs = [({"car", "tree"}, {"car", "tree"}),
         ({"car", "tree"}, {"car", "sky"}),
         ({"car"}, {"sky"})]
for a, b in pairs:
    print(f"{sorted(a)!s:18s} vs {sorted(b)!s:18s} ->  {concept_iou(a, b):.3f}")

print()
print("== maximum-weight matching beats greedy pairing ==")
w = np.array([[0.9, 0.8],
              [0.9, 0.1]])
print(f"weights:\n{w}")
print("greedy would take (0,0)=0.9 then settle for (1,1)=0.1, total 1.0")
pairs = max_weight_matching(w)
total = sum(x for _, _, x in pairs)
print(f"optimal pairs {[(i, j) for i, j, _ in pairs]}, total {total:.1f}")
_, brute_total = brute_force_matching(w)
print(f"exhaustive optimum {brute_total:.1f}")

print()
print("== one candidate summary against one reference ==")
concepts = [{"car"}, {"car", "tree"}, {"sky"}, {"food"}, {"tree"}, {"car", "sky"}]
candidate = [0, 2, 4]
reference = [1, 2, 5]
r = evaluate_summary(candidate, reference, concepts)
for c, ref, weight in r.matched_pairs:
    print(f"shot {c} ({sorted(concepts[c])}) ~ shot {ref} ({sorted(concepts[ref])})  "
          f"IoU {weight:.3f}")
print(f"precision {r.precision:.3f}  recall {r.recall:.3f}  F1 {r.f1:.3f}")

print()
print("== per-video averaging, then the dataset row ==")
annotations = {
    "vid_a": [{"car"}, {"tree"}, {"sky"}, {"car"}],
    "vid_b": [{"food"}, {"food"}, {"tree"}],
}
references = {
    "vid_a": {"car_tree": [0, 1], "car_sky": [2, 3]},
    "vid_b": {"food_tree": [0, 2]},
}
candidates = {
    "vid_a": {"car_tree": [0, 1], "car_sky": [0, 1]},
    "vid_b": {"food_tree": [1, 2]},
}
metrics = evaluate_dataset(candidates, references, annotations)
print(format_metrics_table(metrics))
