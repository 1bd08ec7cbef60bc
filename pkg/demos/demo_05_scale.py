"""
Production-sized synthetic graph
================================

Builds a 240K-node, ~2.5M-edge graph with mean degree near 21 and times
retrieval on it. Pass a number on the command line to change how many cells
are timed (default 100).
"""

import sys
import time

from convkg.annotate import retrieve
from convkg.graph_store import graph_stats
from convkg.synth import build, vckg_profile_spec

n_cells = int(sys.argv[1]) if len(sys.argv) > 1 else 100

t0 = time.perf_counter()
data = build(vckg_profile_spec(seed=0, n_sentences=n_cells))
print(f"built in {time.perf_counter() - t0:.1f}s")
print(graph_stats(data.graph).to_dict())

# %%
times = []
for s in data.sentences:
    t0 = time.perf_counter()
    retrieve(s, data.graph)
    times.append(time.perf_counter() - t0)
times.sort()
print(f"{len(times)} cells: median {times[len(times) // 2] * 1e3:.1f} ms, "
      f"max {times[-1] * 1e3:.1f} ms, total {sum(times):.1f}s")
