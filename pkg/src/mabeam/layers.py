"""Shared network building blocks: two-stage MLPs and node-edge graph layers.

Aggregations are means, so both node sides may be permuted freely: swapping
node order permutes the corresponding feature rows and edge slices without
changing any value (the equivariance the positioning encoder relies on).
"""

import numpy as np

from . import autodiff as ad


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def rowwise_matmul(x: ad.Tensor, w: ad.Tensor) -> ad.Tensor:
    """x (..., d) @ w (d, h) folding all leading axes into one GEMM."""
    lead = x.shape[:-1]
    if len(lead) == 1:
        return ad.matmul(x, w)
    flat = ad.reshape(x, (-1, x.shape[-1]))
    return ad.reshape(ad.matmul(flat, w), lead + (w.shape[1],))


class Mlp:
    """Two linear stages, each followed by relu.

    Multiple inputs are handled with split first-stage weights, which is
    identical to concatenating the inputs along the last axis; inputs only
    need broadcast-compatible leading shapes.
    """

    def __init__(self, store: ad.ParameterStore, name: str, in_dims, out_dim: int,
                 rng: np.random.Generator, hidden: int | None = None):
        in_dims = tuple(in_dims)
        hidden = out_dim if hidden is None else hidden
        fan = sum(in_dims)
        self.in_dims = in_dims
        self.w0 = [store.create(f"{name}.w0{i}", uniform_init(rng, fan, (d, hidden)))
                   for i, d in enumerate(in_dims)]
        self.b0 = store.create(f"{name}.b0", uniform_init(rng, fan, (hidden,)))
        self.w1 = store.create(f"{name}.w1", uniform_init(rng, hidden, (hidden, out_dim)))
        self.b1 = store.create(f"{name}.b1", uniform_init(rng, hidden, (out_dim,)))

    def __call__(self, *xs: ad.Tensor) -> ad.Tensor:
        if len(xs) != len(self.w0):
            raise ValueError(f"expected {len(self.w0)} inputs, got {len(xs)}")
        h = ad.fused_dense(xs, [w.tensor() for w in self.w0], self.b0.tensor())
        return ad.fused_dense([h], [self.w1.tensor()], self.b1.tensor())


class NodeEdgeLayer:
    """One synchronous node/edge update round over a dense bipartite graph.

    a-nodes play the grid-point (or selected-antenna) role, b-nodes the user
    role.  All updates read the previous round's features:

      f_b' = mlp2(f_b, mean_a mlp1(f_a, e))
      f_a' = mlp4(f_a, mean_b mlp3(f_b, e))
      e'   = mlp7(e, mean_a mlp5(e, f_b), mean_b mlp6(e, f_a))
    """

    def __init__(self, store: ad.ParameterStore, name: str, dim: int,
                 rng: np.random.Generator):
        self.mlp1 = Mlp(store, f"{name}.mlp1", (dim, dim), dim, rng)
        self.mlp2 = Mlp(store, f"{name}.mlp2", (dim, dim), dim, rng)
        self.mlp3 = Mlp(store, f"{name}.mlp3", (dim, dim), dim, rng)
        self.mlp4 = Mlp(store, f"{name}.mlp4", (dim, dim), dim, rng)
        self.mlp5 = Mlp(store, f"{name}.mlp5", (dim, dim), dim, rng)
        self.mlp6 = Mlp(store, f"{name}.mlp6", (dim, dim), dim, rng)
        self.mlp7 = Mlp(store, f"{name}.mlp7", (dim, dim, dim), dim, rng)

    def __call__(self, f_a: ad.Tensor, f_b: ad.Tensor, e: ad.Tensor):
        batch, na, nb, dim = e.shape
        f_a_col = ad.reshape(f_a, (batch, na, 1, dim))
        f_b_row = ad.reshape(f_b, (batch, 1, nb, dim))

        new_b = self.mlp2(f_b, ad.mean_axis(self.mlp1(f_a_col, e), 1))
        new_a = self.mlp4(f_a, ad.mean_axis(self.mlp3(f_b_row, e), 2))
        agg_a = ad.mean_axis(self.mlp5(e, f_b_row), 1)  # (B, Nb, d)
        agg_b = ad.mean_axis(self.mlp6(e, f_a_col), 2)  # (B, Na, d)
        new_e = self.mlp7(e,
                          ad.reshape(agg_a, (batch, 1, nb, dim)),
                          ad.reshape(agg_b, (batch, na, 1, dim)))
        return new_a, new_b, new_e
