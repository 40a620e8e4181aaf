"""
Push-approximated PageRank rows and the elbow cut
=================================================

Forward push gives a sparse approximation of one row of the personalized
PageRank matrix. Here we compare it with the exact row on a small graph,
then let the elbow of the score curve decide how many neighbors to keep.
"""

import numpy as np

from coreppr import Graph, PprParams, elbow_select, elbow_truncate, exact_ppr, push_appr

###############################################################################
# Two triangles joined by a bridge, plus a tail hanging off node 5.

edges = np.array([[0, 1], [1, 2], [2, 0], [2, 3], [3, 4], [4, 5], [5, 3], [5, 6], [6, 7]])
g = Graph.from_edges(edges[:, 0], edges[:, 1])
print(f"n={g.n} m={g.m} degrees={g.degrees.tolist()}")

###############################################################################
# Push from node 0 at two precisions. The error per entry stays below
# epsilon times the node degree.

exact = exact_ppr(g, 0, alpha=0.25)
for eps in (1e-2, 1e-4):
    row = push_appr(g, 0, PprParams(alpha=0.25, epsilon=eps))
    approx = np.zeros(g.n)
    approx[row.nodes] = row.scores
    print(f"eps={eps:g}: {len(row.nodes)} nodes touched, max error {np.abs(approx - exact).max():.2e}")

###############################################################################
# Scores come back sorted, largest first. The source is left out of the
# curve when looking for the elbow, then put back.

row = push_appr(g, 0, PprParams(alpha=0.25, epsilon=1e-4))
for node, score in zip(row.nodes, row.scores):
    print(f"  node {node}: {score:.4f}")
keep = elbow_select(row)
cut = elbow_truncate(row)
print(f"elbow keeps {keep} neighbors; truncated row = {cut.nodes.tolist()}")
