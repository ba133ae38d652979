"""Pure numpy version of the compiled kernels, used when the extension is missing."""

import numpy as np


def cubic_convolve(ka, va, kb, vb, kc, vc, lo, shape):
    """out[a + b - c - lo] += va * vb * vc over every ordered triple (flattened output)."""
    ka, kb, kc = (np.asarray(k, dtype=np.int64) for k in (ka, kb, kc))
    va, vb, vc = (np.asarray(v, dtype=float) for v in (va, vb, vc))
    shape = tuple(int(s) for s in shape)
    out = np.zeros(int(np.prod(shape)), dtype=float)
    if len(ka) == 0 or len(kb) == 0 or len(kc) == 0:
        return out
    # pair a and b once, then sweep c in one broadcast
    ab_keys = (ka[:, None, :] + kb[None, :, :]).reshape(-1, ka.shape[1])
    ab_vals = (va[:, None] * vb[None, :]).ravel()
    keys = ab_keys[:, None, :] - kc[None, :, :] - np.asarray(lo, dtype=np.int64)
    flat = np.ravel_multi_index(keys.reshape(-1, ka.shape[1]).T, shape)
    np.add.at(out, flat, (ab_vals[:, None] * vc[None, :]).ravel())
    return out
