"""Temporal segmentation by change-point detection.

Draws a piecewise-constant feature stream with known scene cuts,
recovers them with the dynamic program, and cross-checks the result
against the exhaustive search on a small instance.
"""

import numpy as np

from chansum.segmentation import brute_force_segment, kts_segment, total_cost

rng = np.random.default_rng(3)

print("== recover planted scene cuts ==")
true_cuts = [0, 20, 35, 60, 80, 100]
centers = rng.standard_normal((5, 8)) * 3.0
rows = []
for k in range(5):
    n = true_cuts[k + 1] - true_cuts[k]
    rows.append(centers[k] + rng.standard_normal((n, 8)) * 0.4)
x = np.vstack(rows)
found = kts_segment(x, max_segments=8, max_segment_len=40, penalty=1.0)
print(f"planted cuts   {tuple(true_cuts[1:-1])}")
print(f"recovered cuts {found.change_points}")
print(f"segments       {found.segments()}")
print(f"within-segment scatter {total_cost(x, found):.2f}")

print()
print("== the dynamic program matches exhaustive search exactly ==")
small = rng.standard_normal((11, 2))
small[4:] += 2.5
fast = kts_segment(small, max_segments=3, max_segment_len=8, penalty=0.5)
slow = brute_force_segment(small, max_segments=3, max_segment_len=8, penalty=0.5)
print(f"dp cuts     {fast.change_points}  cost {total_cost(small, fast):.10f}")
print(f"brute cuts  {slow.change_points}  cost {total_cost(small, slow):.10f}")
print(f"identical:  {fast.change_points == slow.change_points}")

print()
print("== the penalty trades cut count against fit ==")
for penalty in (0.1, 1.0, 10.0, 100.0):
    b = kts_segment(x, max_segments=10, max_segment_len=100, penalty=penalty)
    print(f"penalty {penalty:>6.1f}  ->  {b.n_segments} segments")
