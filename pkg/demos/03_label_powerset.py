"""How LPQ turns labelsets into single-label classes and back.

Three classes with every labelset observed give eight synthetic classes.
A single-label estimate over them maps back to per-class prevalences
through the 0/1 assignment matrix A: class y gets the total mass of the
labelsets that contain it.
"""

import numpy as np

from mlquant.quantify_ml import LPQQuantifier, lpq_reconstruct
from mlquant.synth import synth_generate

labelsets = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
                      [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]])
estimate = np.array([0.15, 0.10, 0.26, 0.19, 0.05, 0.13, 0.11, 0.01])
for row, p in zip(labelsets, estimate):
    members = [f"y{i + 1}" for i in np.flatnonzero(row)] or ["(empty)"]
    print(f"{'+'.join(members):12s} {p:.2f}")
print("per class:", np.round(lpq_reconstruct(estimate, labelsets), 2))

# the same on data: k-means puts co-occurring classes in one cluster
ds = synth_generate(6, 3000, 10, correlation={"rho": 0.6, "groups": [[0, 1, 2], [3, 4, 5]]},
                    separation=2.0, seed=3)
train, test = ds.subset(np.arange(2000)), ds.subset(np.arange(2000, 3000))
q = LPQQuantifier(clustering="kmeans", k_clusters=2, seed=3).fit(train)
print("\nclusters:", q.clusters_)
print("synthetic classes per cluster:", [A.shape[0] for A in q.assignments_])
print("estimate:", np.round(q.quantify(test.features), 3))
print("true:    ", np.round(test.prevalence(), 3))
