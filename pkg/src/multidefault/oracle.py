"""Ground truth by exhaustive atom averaging and by Monte Carlo sampling."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, UnsupportedError
from .model import DensityModel, JointMeasure, ObservationScheme, Partition, ScenarioTree

RNG_ALGORITHM = "PCG64"
CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class AtomTable:
    """Partition of the (terminal node, grid point) pairs into sigma-algebra atoms."""

    labels: np.ndarray  # (N_T, K) atom id of every pair
    n_atoms: int
    keys: list | None = None

    @classmethod
    def trivial(cls, n_nodes, n_points):
        return cls(np.zeros((n_nodes, n_points), dtype=np.intp), 1, [()])

    @classmethod
    def observable(cls, tree: ScenarioTree, t, T, partition: Partition):
        """Atoms of G_t lifted to depth T: (ancestor at t, observation atom at t)."""
        anc = tree.ancestors(t, T)
        A = partition.n_atoms
        labels = anc[:, None] * A + partition.labels[None, :]
        keys = [(node, key) for node in range(tree.size(t)) for key in partition.keys]
        return cls(labels, tree.size(t) * A, keys)

    @classmethod
    def total(cls, tree: ScenarioTree, t, T, n_points):
        """Atoms of F_t v sigma(chi): (ancestor at t, grid point)."""
        anc = tree.ancestors(t, T)
        labels = anc[:, None] * n_points + np.arange(n_points)[None, :]
        return cls(labels, tree.size(t) * n_points)

    def masses(self, joint: JointMeasure):
        return np.bincount(self.labels.ravel(), weights=joint.masses.ravel(), minlength=self.n_atoms)


@dataclass(frozen=True, eq=False)
class OracleResult:
    values: np.ndarray
    mass: np.ndarray
    mass_zero: np.ndarray


def brute_force_condexp(joint: JointMeasure, atoms: AtomTable, values) -> OracleResult:
    """Per atom: sum(m * Y) / sum(m); atoms without mass give 0 and are flagged."""
    m = joint.masses
    y = np.broadcast_to(np.asarray(values, dtype=float), m.shape)
    if atoms.labels.shape != m.shape:
        raise ModelError(f"atom table shape {atoms.labels.shape} does not match joint measure {m.shape}")
    missing = (m > 0) & ~np.isfinite(y)
    if np.any(missing):
        node, k = np.argwhere(missing)[0]
        raise ModelError(f"payoff missing at support point (node={node}, grid index={k})")
    lab = atoms.labels.ravel()
    mass = np.bincount(lab, weights=m.ravel(), minlength=atoms.n_atoms)
    num = np.bincount(lab, weights=np.where(m > 0, m * y, 0.0).ravel(), minlength=atoms.n_atoms)
    zero = ~(mass > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(zero, 0.0, num / np.where(zero, 1.0, mass))
    return OracleResult(vals, mass, zero)


def oracle_condexp_G(model: DensityModel, scheme: ObservationScheme, terminal_values, t, T=None):
    """E[Y | G_t] by atom averaging of the joint law at T -> (values, mass_zero) of shape (N_t, A)."""
    from .model import build_joint_measure, model_partition

    T = model.horizon if T is None else T
    part = model_partition(model, scheme, t)
    atoms = AtomTable.observable(model.tree, t, T, part)
    res = brute_force_condexp(build_joint_measure(model, T), atoms, terminal_values)
    shape = (model.tree.size(t), part.n_atoms)
    return res.values.reshape(shape), res.mass_zero.reshape(shape), part


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Independent draws of (terminal node, default variable, observation counts)."""

    seed: int
    algorithm: str
    leaf: np.ndarray  # (count,)
    chi: np.ndarray  # (count, dim)
    observed_counts: np.ndarray  # (count, T + 1): defaults observed at each grid time
    grid_index: np.ndarray | None = None

    @property
    def count(self):
        return len(self.leaf)

    def estimate(self, fn):
        """Sample mean and standard error of fn(leaf, chi)."""
        v = np.asarray(fn(self.leaf, self.chi), dtype=float)
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def _sample_leaves(tree: ScenarioTree, rng, count):
    leaf = np.zeros(count, dtype=np.intp)
    for s in range(1, tree.depth + 1):
        par, pr = tree.parents[s - 1], tree.probs[s - 1]
        order = np.argsort(par, kind="stable")
        starts = np.searchsorted(par[order], np.arange(tree.size(s - 1)))
        cum = np.cumsum(pr[order])
        base = np.concatenate([[0.0], cum])[starts]
        u = rng.random(count)
        # child j of the current node: first cumulative edge exceeding the uniform
        target = base[leaf] + u
        pos = np.searchsorted(cum, target, side="right")
        ends = np.append(starts[1:], len(par))
        pos = np.minimum(pos, ends[leaf] - 1)
        leaf = order[pos]
    return leaf


def _chunk(model: DensityModel, seq, count):
    rng = np.random.Generator(np.random.PCG64(seq))
    leaf = _sample_leaves(model.tree, rng, count)
    T = model.horizon
    if model.is_grid:
        probs = model.alpha_grid(T) * model.reference.weights
        cum = np.cumsum(probs, axis=1)
        cum /= cum[:, -1:]
        u = rng.random(count)
        idx = np.empty(count, dtype=np.intp)
        for node in np.unique(leaf):
            sel = leaf == node
            idx[sel] = np.minimum(np.searchsorted(cum[node], u[sel], side="right"), probs.shape[1] - 1)
        return leaf, model.reference.points[idx], idx
    sampler = getattr(model.alpha, "sampler", None)
    if sampler is None or not model.deterministic:
        raise UnsupportedError("Lebesgue sampling needs a deterministic density with an exact sampler")
    return leaf, np.asarray(sampler(rng, count), dtype=float), None


def sample_system(model: DensityModel, scheme: ObservationScheme | None, seed: int, count: int,
                  workers: int = 1) -> SampleSet:
    """Draw (node path, chi) pairs: leaf by tree probabilities, chi from alpha_T at the leaf.

    Draws come in fixed-size chunks, each with its own stream spawned from the
    seed, so the output does not depend on ``workers``.
    """
    if count < 1:
        raise ModelError("count must be at least 1")
    if scheme is not None:
        scheme.check_compatible(model)
    sizes = [CHUNK] * (count // CHUNK) + ([count % CHUNK] if count % CHUNK else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _chunk(model, *a), zip(seqs, sizes)))
    else:
        parts = [_chunk(model, s, c) for s, c in zip(seqs, sizes)]
    leaf = np.concatenate([p[0] for p in parts])
    chi = np.vstack([p[1] for p in parts])
    idx = np.concatenate([p[2] for p in parts]) if model.is_grid else None
    counts = np.zeros((count, model.horizon + 1), dtype=np.intp)
    if scheme is None or scheme.kind != "initial":
        times = chi[:, : model.n]
        for t in range(1, model.horizon + 1):
            counts[:, t] = np.sum(times <= t, axis=1)
    else:
        counts[:] = model.n
    return SampleSet(int(seed), RNG_ALGORITHM, leaf, chi, counts, idx)
