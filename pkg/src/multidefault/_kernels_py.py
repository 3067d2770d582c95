"""Pure numpy fallback for the compiled kernels (same accumulation order)."""
import numpy as np


def backward_step(child_values, parent, prob, n_parent):
    out = np.zeros((n_parent, child_values.shape[1]))
    np.add.at(out, parent, prob[:, None] * child_values)
    return out


def group_sum(values, labels, n_groups):
    out = np.zeros((values.shape[0], n_groups))
    for k in range(values.shape[1]):
        out[:, labels[k]] += values[:, k]
    return out
