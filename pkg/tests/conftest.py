import numpy as np

from mabeam import autodiff as ad


def fd_grad(fn, x, eps=1e-5):
    """Central finite differences of a scalar function over array x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = fn(x)
        flat[i] = old - eps
        fm = fn(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def fd_param_grad(fn, param, eps=1e-5):
    """Central finite differences of scalar fn() w.r.t. a Parameter's entries."""
    g = np.zeros_like(param.value)
    flat = param.value.reshape(-1)
    gf = g.reshape(-1)
    with ad.inference_mode():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = fn()
            flat[i] = old - eps
            fm = fn()
            flat[i] = old
            gf[i] = (fp - fm) / (2.0 * eps)
    return g


def scalarize(t, weights):
    """Weighted sum of all entries as a taped scalar."""
    w = ad.constant(weights)
    prod = ad.multiply(t, w)
    flat = ad.reshape(prod, (prod.size,))
    return ad.sum_axis(flat, 0)
