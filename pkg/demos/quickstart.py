"""Generate a small synthetic network, train briefly and rank candidate friends.

    python demos/quickstart.py
"""

from dataclasses import replace

import numpy as np

from mvmn import benchmark
from mvmn.synth import SynthConfig
from mvmn.train import train
from mvmn.evaluation import evaluate

# a quarter-size network keeps this under a minute
synth = SynthConfig(communities=4, users_per_community=30)
data = benchmark.prepare(seed=0, synth=synth)
ds = data.dataset
print(f"{ds.n_users} users, {ds.n_locations} locations, "
      f"{len(ds.train_edges)}/{len(ds.val_edges)}/{len(ds.test_edges)} train/val/test edges")

config = replace(benchmark.bench_config(seed=0), epochs=3)
ckpt = train(ds, config, progress=lambda h: print(f"  epoch {h['epoch']}: loss {h['loss']:.3f} val AUC {h['val_auc']:.3f}"))
metrics = evaluate(ckpt.model(), ds, data.candidates)
print(f"test AUC {metrics['auc']:.3f}  P@10 {metrics['p@10']:.3f}  R@10 {metrics['r@10']:.3f}")

# average score of held-out friendships against candidate non-friends
model = ckpt.model()
friends = np.array(sorted(ds.test_edges))
strangers = np.array([(u, v) for u in data.candidates for v in data.candidates[u]
                      if (min(u, v), max(u, v)) not in ds.all_edges])
print(f"mean score: held-out friends {model.score_pairs(ds, friends).mean():.3f}, "
      f"non-friends {model.score_pairs(ds, strangers).mean():.3f}")
