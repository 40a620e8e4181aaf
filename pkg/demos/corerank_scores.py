"""
Core numbers and CoreRank
=========================

The k-core peel assigns every node the largest k for which it survives in
a subgraph of minimum degree k. CoreRank sums those numbers over each
node's neighbors, which favors nodes attached to a dense center.
"""

import numpy as np

from coreppr import Graph, core_scores

###############################################################################
# A 4-clique with a pendant on node 0 and a short path hanging off node 3.

src = [0, 0, 0, 1, 1, 2, 0, 3, 5]
dst = [1, 2, 3, 2, 3, 3, 4, 5, 6]
g = Graph.from_edges(np.array(src), np.array(dst))
scores = core_scores(g)

print("node  degree  core  corerank")
for i in range(g.n):
    print(f"{i:>4}  {g.degrees[i]:>6}  {scores.core_number[i]:>4}  {scores.corerank[i]:>8}")

###############################################################################
# The clique members all have core 3, but node 0 and node 3 collect a bit
# more CoreRank from their extra neighbors. Within a propagation row these
# values are normalized to sum to one.

row_nodes = np.array([0, 1, 4])
weights = scores.corerank[row_nodes] / scores.corerank[row_nodes].sum()
print("C weights on nodes", row_nodes.tolist(), "->", np.round(weights, 3).tolist())
