"""How often does co-location imply friendship, with and without a time window?

    python demos/cooccurrence_analysis.py
"""

from mvmn import benchmark
from mvmn.analysis import report

data = benchmark.prepare(seed=0)
for mode in ("bucket", "sliding"):
    for hours in (1.0, 3.0):
        co = report(data.dataset, window_hours=hours, mode=mode)["cooccurrence"]
        print(f"{mode:7s} {hours:.0f}h  SR {co['SR']:.3f}  STR {co['STR']:.3f}  "
              f"({co['n_lt']} pairs co-located in time, of {co['n_l']} sharing a place)")

sim = report(data.dataset)["similarity"]
for which in ("frame", "gap"):
    print(f"{which:5s} similarity  linked {sim[which + '_linked']['mean']:.3f}  "
          f"unlinked {sim[which + '_unlinked']['mean']:.3f}")
