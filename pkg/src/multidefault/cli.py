"""Command line interface.

Exit codes: 0 success, 1 usage or parse error, 2 validation or check failure
(the report is still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from . import config as cfgmod
from .conditional import condexp_G
from .errors import ModelError, NotAdaptedError, NotMartingaleError, UnsupportedError
from .martingale import (
    GMartingaleCandidate,
    TwoDefaultInputs,
    check_immersion,
    check_initial_enlargement_martingale,
    check_mtilde_condition,
    check_nonordered_characterization,
    check_ordered_characterization,
    construct_G_martingale,
    construct_two_default_martingale,
    random_L_family,
    random_perturbation,
)
from .model import ObservationScheme, PayoffSpec, validate_density_model
from .oracle import RNG_ALGORITHM, sample_system
from .prediction import predict, predict_generic

OUT_ENV = "MULTIDEFAULT_OUT_DIR"
COMMANDS = ("validate", "predict", "condexp", "price", "check-martingale", "simulate", "fixtures")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(x):
    """Shortest round-trip decimal for floats."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    if x is None:
        return ""
    return str(x)


def _key_text(key):
    return json.dumps(key, default=float) if not isinstance(key, str) else key


class Report:
    """CSV writer with a reproducibility header."""

    def __init__(self, command, cfg=None, seed=None, tol=None):
        self.buf = io.StringIO()
        self.buf.write(f"# multidefault {__version__}\n")
        self.buf.write(f"# command {command}\n")
        self.buf.write(f"# config-sha256 {cfgmod.config_hash(cfg) if cfg is not None else ''}\n")
        self.buf.write(f"# seed {'' if seed is None else seed}\n")
        self.buf.write(f"# tolerance {'' if tol is None else fmt(float(tol))}\n")
        self.writer = csv.writer(self.buf, lineterminator="\n")

    def row(self, *values):
        self.writer.writerow([fmt(v) for v in values])

    def comment(self, text):
        self.buf.write(f"# {text}\n")

    def emit(self, out, command):
        text = self.buf.getvalue()
        path = out
        if path is None and os.environ.get(OUT_ENV):
            path = os.path.join(os.environ[OUT_ENV], f"{command}.csv")
        if path is None or path == "-":
            sys.stdout.write(text)
            return
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# helpers


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def _scheme(args, cfg):
    if getattr(args, "scheme", None):
        return ObservationScheme(args.scheme, t0=args.t0, eps=args.eps)
    if "scheme" in cfg:
        return cfgmod.build_scheme(cfg["scheme"])
    raise UsageError("no observation scheme given (use --scheme or a scheme section)")


def parse_payoff(spec, model, maturity=None):
    """survive-S, survive-max-S, last-survive-S, or a JSON file."""
    T = model.horizon if maturity is None else maturity
    if spec.startswith("survive-max-") or spec.startswith("last-survive-"):
        return PayoffSpec.survival(float(spec.rsplit("-", 1)[1]), T, coord="max", n_time=model.n, label=spec)
    if spec.startswith("survive-"):
        return PayoffSpec.survival(float(spec[len("survive-"):]), T, coord="min", n_time=model.n, label=spec)
    try:
        with open(spec) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"unknown payoff {spec!r} (not a named payoff or a file)") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse payoff file {spec}: {exc}") from None
    T = int(data.get("maturity", T))
    kind = data.get("kind", "survive")
    if kind == "survive":
        coord = data.get("coord", "min")
        return PayoffSpec.survival(float(data["threshold"]), T, coord=coord, n_time=model.n, label=spec)
    if kind == "table":
        if not model.is_grid:
            raise UsageError("table payoffs need a grid model")
        return PayoffSpec.table(data["values"], model.reference, T, label=spec)
    raise UsageError(f"unknown payoff kind {kind!r}")


def _realized_index(model, realized):
    try:
        return int(model.reference.lookup([realized])[0])
    except KeyError:
        raise UsageError(f"realized point {realized} is not on the grid") from None


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args):
    cfg, model, _ = cfgmod.load(args.model)
    tol = args.tol if args.tol is not None else model.default_tol
    rep = validate_density_model(model, tol)
    out = Report("validate", cfg, tol=tol)
    out.row("check", "t", "node", "defect")
    for t, d in enumerate(rep.normalization):
        for node, v in enumerate(d):
            out.row("normalization", t, node, v)
    for t, d in enumerate(rep.martingale):
        out.row("martingale", t, "", float(np.max(d)) if d.size else 0.0)
    out.row("beta-mean", "", "", rep.max_beta_mean)
    out.row("absorption", "", "", float(rep.absorption_violations))
    out.comment(f"passed {rep.passed}")
    out.emit(args.out, "validate")
    return 0 if rep.passed else 2


def cmd_predict(args):
    cfg, model, _ = cfgmod.load(args.model)
    scheme = _scheme(args, cfg)
    realized = _floats(args.realized)
    out = Report("predict", cfg)
    out.row("regime", "pins", "Z", "point", "probability")
    if model.is_grid:
        scheme.check_compatible(model)
        pm = predict_generic(model.eta, scheme, model.reference, args.t, _realized_index(model, realized), model.n)
    else:
        pm = predict(model, scheme, args.t, realized)
    pins = json.dumps({str(c): v for c, v in pm.regime.pins})
    for p, q in zip(pm.points, pm.probs):
        if q != 0.0 or not model.is_grid:
            out.row(pm.regime.label, pins, pm.Z, " ".join(fmt(float(x)) for x in p), q)
    out.comment(f"mass-zero {pm.mass_zero}")
    out.emit(args.out, "predict")
    return 0


def _condexp_rows(args, command, discount=1.0):
    cfg, model, _ = cfgmod.load(args.model)
    scheme = _scheme(args, cfg)
    payoff = parse_payoff(args.payoff, model, args.maturity)
    realized = _floats(args.realized) if args.realized else None
    if not model.is_grid and realized is None:
        raise UsageError("Lebesgue models need --realized")
    res = condexp_G(model, scheme, payoff, args.t, method=args.method, realized=realized)
    out = Report(command, cfg)
    out.row("node", "atom", "value", "flags")
    for node in range(res.values.shape[0]):
        for a, key in enumerate(res.keys):
            flag = "mass-zero" if res.mass_zero[node, a] else ""
            out.row(node, _key_text(key), discount * res.values[node, a], flag)
    out.emit(args.out, command)
    return 0


def cmd_condexp(args):
    return _condexp_rows(args, "condexp")


def cmd_price(args):
    return _condexp_rows(args, "price", args.discount)


def _candidate(name, model, scheme, seed):
    T = model.horizon
    if not model.is_grid:
        if name != "constructed":
            raise UsageError("Lebesgue models support only the constructed candidate")
        rng = np.random.Generator(np.random.PCG64(seed))
        c0, c1, c2, c12 = rng.normal(size=4)
        inputs = TwoDefaultInputs(1.0 + abs(c0), lambda u: c1 * np.exp(-u), lambda u: c2 * np.exp(-u),
                                  lambda p: c12 * np.exp(-p[:, 0] - p[:, 1]))
        return construct_two_default_martingale(model, inputs)
    if name == "constructed":
        return construct_G_martingale(model, scheme, random_L_family(model.tree, seed))
    if name == "constant":
        return GMartingaleCandidate.constant(model, scheme, 1.0)
    if name == "drift":
        return GMartingaleCandidate.drift(model, scheme)
    if name == "perturbed":
        base = construct_G_martingale(model, scheme, random_L_family(model.tree, seed))
        return random_perturbation(base, model, np.random.Generator(np.random.PCG64(seed)))
    if name == "inverse-beta":
        tabs = []
        for t in range(T + 1):
            b = model.beta_grid(t)
            tabs.append(np.where(b > 0, 1.0 / np.where(b > 0, b, 1.0), 0.0))
        return GMartingaleCandidate(ObservationScheme("initial"), tables=tabs, label="inverse-beta")
    if name == "alpha":
        return GMartingaleCandidate(ObservationScheme("initial"),
                                    tables=[model.alpha_grid(t) for t in range(T + 1)], label="alpha")
    try:
        with open(name) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"unknown candidate {name!r} (not a named candidate or a file)") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse candidate file {name}: {exc}") from None
    return GMartingaleCandidate.from_tables(model, scheme, data["tables"], label=name,
                                            check=scheme.kind != "initial")


def cmd_check(args):
    cfg, model, _ = cfgmod.load(args.model)
    scheme = _scheme(args, cfg)
    tol = args.tol
    crit = args.criterion
    if crit == "immersion":
        rep = check_immersion(model, scheme, tol=tol, seed=args.seed)
    else:
        if crit == "initial":
            scheme = ObservationScheme("initial")
        cand = _candidate(args.candidate, model, scheme, args.seed)
        if crit == "mtilde":
            rep = check_mtilde_condition(cand, model, tol=tol)
        elif crit == "ordered":
            rep = check_ordered_characterization(cand, model, tol=tol)
        elif crit == "nonordered":
            rep = check_nonordered_characterization(cand, model, tol=tol)
        else:
            rep = check_initial_enlargement_martingale(cand.tables, model, tol=tol)
    out = Report("check-martingale", cfg, seed=args.seed, tol=tol)
    out.row("check", "t", "node", "atom", "defect")
    for r in rep.rows:
        out.row(*r)
    for c in rep.checks:
        out.comment(f"max {c} {fmt(rep.max(c))}")
    for k, v in sorted(rep.notes.items()):
        out.comment(f"{k} {v}")
    out.comment(f"passed {rep.passed}")
    out.emit(args.out, "check-martingale")
    return 0 if rep.passed else 2


def cmd_simulate(args):
    cfg, model, _ = cfgmod.load(args.model)
    scheme = cfgmod.build_scheme(cfg["scheme"]) if "scheme" in cfg else None
    s = sample_system(model, scheme, args.seed, args.count, workers=args.workers)
    out = Report("simulate", cfg, seed=args.seed)
    out.comment(f"rng {RNG_ALGORITHM}")
    dim = s.chi.shape[1]
    names = [f"u{i + 1}" for i in range(model.n)] + [f"l{i + 1}" for i in range(dim - model.n)]
    out.row("sample", "leaf", *names, *[f"observed_t{t}" for t in range(model.horizon + 1)])
    for i in range(s.count):
        out.row(i, int(s.leaf[i]), *[float(x) for x in s.chi[i]], *[int(c) for c in s.observed_counts[i]])
    out.emit(args.out, "simulate")
    return 0


def cmd_fixtures(args):
    from . import fixtures

    target = args.out_dir or os.environ.get(OUT_ENV) or "fixtures"
    os.makedirs(target, exist_ok=True)
    names = args.names or ["fixtureA", "fixtureB", "fixtureC", "fixtureD"]
    for name in names:
        if name not in fixtures.FIXTURES:
            raise UsageError(f"unknown fixture {name!r}; available: {', '.join(fixtures.FIXTURES)}")
        path = os.path.join(target, f"{name}.json")
        with open(path, "w") as fh:
            json.dump(fixtures.fixture_config(name), fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(path)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="multidefault", description="Conditional laws and martingale checks for default systems.")
    p.add_argument("--version", action="version", version=f"multidefault {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, scheme=True):
        sp.add_argument("--model", required=True, help="config file or built-in fixture name")
        sp.add_argument("--out", help="output CSV path (default: $%s/<command>.csv or stdout)" % OUT_ENV)
        if scheme:
            sp.add_argument("--scheme", help="observation scheme kind (default: the config's scheme)")
            sp.add_argument("--t0", type=float, help="insider cut")
            sp.add_argument("--eps", type=float, help="advance or delay")

    sp = sub.add_parser("validate", help="check the density hypothesis")
    common(sp, scheme=False)
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("predict", help="conditional law of the default variable")
    common(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--realized", required=True, help="comma separated coordinates of the realized point")
    sp.set_defaults(func=cmd_predict)

    for name, func in (("condexp", cmd_condexp), ("price", cmd_price)):
        sp = sub.add_parser(name, help="conditional expectation in the observable filtration")
        common(sp)
        sp.add_argument("--payoff", required=True)
        sp.add_argument("--t", type=int, default=0 if name == "price" else None, required=name == "condexp")
        sp.add_argument("--maturity", type=int)
        sp.add_argument("--method", choices=("direct", "bayes"), default="direct")
        sp.add_argument("--realized", help="realized point (required for Lebesgue models)")
        if name == "price":
            sp.add_argument("--discount", type=float, default=1.0)
        sp.set_defaults(func=func)

    sp = sub.add_parser("check-martingale", help="martingale criteria in the observable filtration")
    common(sp)
    sp.add_argument("--candidate", default="constructed",
                    help="constructed | constant | drift | perturbed | inverse-beta | alpha | JSON file")
    sp.add_argument("--criterion", choices=("mtilde", "ordered", "nonordered", "initial", "immersion"),
                    default="mtilde")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("simulate", help="Monte Carlo draws")
    common(sp, scheme=False)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fixtures", help="write built-in fixture configs")
    sp.add_argument("--out-dir")
    sp.add_argument("names", nargs="*")
    sp.set_defaults(func=cmd_fixtures)
    return p


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        if getattr(args, "tol", None) is not None and not args.tol > 0:
            raise UsageError("tolerance must be positive")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ModelError, UnsupportedError, NotAdaptedError, NotMartingaleError, KeyError) as exc:
        print(f"multidefault: error: {exc}", file=sys.stderr)
        return 1


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
