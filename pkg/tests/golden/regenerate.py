"""Rebuild the frozen oracle values. Only run when a fixture definition changes on purpose."""
import json
import pathlib

import numpy as np

from multidefault.fixtures import load_fixture
from multidefault.model import build_joint_measure, model_partition
from multidefault.oracle import AtomTable, brute_force_condexp

HERE = pathlib.Path(__file__).parent


def fixture_c_sweep():
    model, scheme = load_fixture("fixtureC")
    T = model.horizon
    rng = np.random.default_rng(2024)
    payoff = rng.uniform(-1.0, 1.0, size=(model.tree.size(T), model.reference.size))
    joint = build_joint_measure(model, T)
    out = {"fixture": "fixtureC", "payoff": payoff.tolist(), "times": []}
    for t in range(T + 1):
        part = model_partition(model, scheme, t)
        res = brute_force_condexp(joint, AtomTable.observable(model.tree, t, T, part), payoff)
        shape = (model.tree.size(t), part.n_atoms)
        out["times"].append({
            "t": t,
            "keys": [list(k) for k in part.keys],
            "values": res.values.reshape(shape).tolist(),
            "mass_zero": res.mass_zero.reshape(shape).tolist(),
        })
    return out


if __name__ == "__main__":
    (HERE / "fixtureC_oracle.json").write_text(json.dumps(fixture_c_sweep(), indent=1) + "\n")
