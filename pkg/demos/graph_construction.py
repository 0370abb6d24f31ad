"""
kNN graphs and their Laplacians
===============================

The solver uses two fixed graphs (a Gaussian kNN graph over the instances and
one over the label rows) and one cosine kNN graph over the binary codes that
is rebuilt every iteration. This demo builds each kind on a toy set and checks
the Laplacian quadratic-form identity.
"""
# %%
import numpy as np

from bhdg.graph import cosine_knn, gaussian_knn, laplacian

rng = np.random.default_rng(1)
points = np.vstack([rng.normal(0, 0.2, (5, 2)), rng.normal(3, 0.2, (5, 2))])
g = gaussian_knn(points, k=3, sigma=1.0)
print("edges:", g.S.nnz // 2, "| symmetric:", (g.S != g.S.T).nnz == 0)
print("cross-cluster weight:", g.S[:5, 5:].sum())

# %%
# ``x' L x`` equals half the weighted sum of squared differences across edges.
lap = laplacian(g)
x = rng.normal(size=10)
S = g.S.toarray()
print(x @ (lap.L @ x), 0.5 * (S * (x[:, None] - x[None, :]) ** 2).sum())

# %%
# Cosine graphs over binary codes: identical codes get weight 1, disjoint ones 0.
codes = np.array([[1, 0, 1], [1, 0, 1], [0, 1, 0], [1, 1, 0]])
print(cosine_knn(codes, k=1).S.toarray().round(3))
