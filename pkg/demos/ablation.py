"""Full model against single-view variants and the beta = 0 objective.

Runs the synthetic benchmark for one seed; expect about ten minutes on one core.

    python demos/ablation.py [seed]
"""

import sys
import time

from mvmn import benchmark

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
data = benchmark.prepare(seed)
print(f"untrained AUC {benchmark.untrained_auc(data):.4f}")
for variant, beta in [("full", 0.1), ("full", 0.0), ("location_only", 0.1),
                      ("temporal_only", 0.1), ("temporal_only", 0.0), ("relation_only", 0.1)]:
    start = time.perf_counter()
    out = benchmark.run(data, variant, beta)
    print(f"{variant:14s} beta={beta:<4} AUC {out['auc']:.4f}  P@10 {out['p@10']:.4f}  "
          f"R@10 {out['r@10']:.4f}  best epoch {out['best_epoch']}  ({time.perf_counter() - start:.0f}s)")
