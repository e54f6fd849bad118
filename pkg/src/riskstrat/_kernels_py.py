"""NumPy implementations of the numerical kernels.

Used when the compiled ``_kernels`` extension is unavailable, or when
``RISKSTRAT_PURE_PYTHON`` is set.  Signatures mirror ``_kernels.pyx``.
"""

import numpy as np

_CHUNK_ELEMENTS = 1 << 22


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def rank_auc(scores, labels):
    """Mann-Whitney AUC from midranks; labels must be 0/1 with both classes present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(s)) + 1))
    ends = np.concatenate((starts[1:], [n]))
    pos_in_group = np.add.reduceat(y, starts)
    # twice the positive rank sum, kept integral: midrank of a group is (start + end + 1) / 2
    twice_rank_sum = int(np.sum((starts + ends + 1) * pos_in_group))
    n_pos = int(y.sum())
    n_neg = n - n_pos
    twice_u = twice_rank_sum - n_pos * (n_pos + 1)
    return twice_u / (2.0 * n_pos * n_neg)


def pava(y, w):
    """Weighted pool-adjacent-violators; returns the fitted value per input point."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    sums, weights, sizes = [], [], []
    for yi, wi in zip(y.tolist(), w.tolist()):
        s, ww, size = yi * wi, wi, 1
        while sums and sums[-1] / weights[-1] > s / ww:
            s += sums.pop()
            ww += weights.pop()
            size += sizes.pop()
        sums.append(s)
        weights.append(ww)
        sizes.append(size)
    out = np.empty(y.shape[0])
    i = 0
    for s, ww, size in zip(sums, weights, sizes):
        out[i:i + size] = s / ww
        i += size
    return out


def coalition_values_linear(target_terms, background_terms, intercept):
    """Mean background probability for every coalition of a logit-additive model.

    ``target_terms`` is (n, M) and ``background_terms`` is (B, M): the logit
    contribution of each feature group.  Bit ``i`` of the coalition index
    selects the target's term for feature ``i``.  Returns (n, 2**M).
    """
    target_terms = np.ascontiguousarray(target_terms, dtype=np.float64)
    background_terms = np.ascontiguousarray(background_terms, dtype=np.float64)
    n, m = target_terms.shape
    b = background_terms.shape[0]
    n_masks = 1 << m
    masks = np.arange(n_masks)
    out = np.empty((n, n_masks))
    step = max(1, _CHUNK_ELEMENTS // (n_masks * b))
    for lo in range(0, n, step):
        t = target_terms[lo:lo + step]
        logit = np.full((t.shape[0], n_masks, b), float(intercept))
        for g in range(m):
            inside = ((masks >> g) & 1).astype(bool)
            term = np.where(inside[None, :, None], t[:, g][:, None, None], background_terms[:, g][None, None, :])
            logit = logit + term
        p = _sigmoid(logit)
        # deviations from the first row: exact when all rows agree
        out[lo:lo + step] = p[:, :, 0] + (p - p[:, :, :1]).sum(axis=2) / b
    return out


def shapley_weights(m):
    """Weight |S|!(M-|S|-1)!/M! indexed by coalition size |S| = 0..M-1."""
    from math import factorial

    return np.array([factorial(s) * factorial(m - s - 1) / factorial(m) for s in range(m)])


def shapley_from_values(values, m):
    """Shapley vectors from a table of coalition values, shape (n, 2**M) -> (n, M)."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    n_masks = 1 << m
    masks = np.arange(n_masks)
    sizes = np.array([bin(k).count("1") for k in range(n_masks)])
    weights = shapley_weights(m)
    phi = np.empty((values.shape[0], m))
    for i in range(m):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        diffs = values[:, without | bit] - values[:, without]
        phi[:, i] = (diffs * weights[sizes[without]]).sum(axis=1)
    return phi
