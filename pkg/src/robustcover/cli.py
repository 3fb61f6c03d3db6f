"""Command-line entry point.

Exit codes: 0 success, 1 a check or bound was violated, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .attack import AttackConfig, PerturbationSet
from .fileio import ParseError, load_dataset, load_json, load_network, save_dataset, save_network, write_json

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _p_value(text) -> float:
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "linf"):
        return math.inf
    try:
        p = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"p must be 2 or inf, got {text!r}") from None
    if p not in (2.0, math.inf):
        raise argparse.ArgumentTypeError(f"p must be 2 or inf, got {text!r}")
    return p


def _int_list(text):
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable
    default: Any = None
    help: str = ""
    required: bool = False
    flag: bool = False


COMMON = [Opt("seed", int, 0, "root seed for every random stream"),
          Opt("out", str, None, "report path (JSON)", required=True)]

ATTACK = [Opt("p", _p_value, math.inf, "attack norm: 2 or inf"),
          Opt("eps", float, 0.1, "attack radius")]

COMMANDS = {
    "bounds": ("evaluate every generalization bound for a network on a dataset", [
        Opt("network", str, None, "network JSON", required=True),
        Opt("data", str, None, "dataset CSV", required=True),
        *ATTACK,
        Opt("gamma", float, 1.0, "ramp-loss margin"),
        Opt("delta", float, 0.05, "failure probability in (0, 1)"),
        Opt("C1", float, 1.0, "constant of the weight-space competitor bound"),
        Opt("C2", float, 1.0, "constant of the weight-space competitor bound"),
        Opt("B", float, None, "input norm bound (default: max row norm of the data)"),
        Opt("linear_trials", int, 200, "Monte Carlo trials for the linear sandwich"),
    ]),
    "lemma-check": ("check the covering lemmas with the exact grid oracle", [
        Opt("network", str, None, "network JSON", required=True),
        Opt("network2", str, None, "second network JSON (default: build a Maurey cover network)"),
        Opt("data", str, None, "dataset CSV (input dimension <= 3)", required=True),
        *ATTACK,
        Opt("gamma", float, 1.0, "ramp-loss margin"),
        Opt("resolution", int, 201, "grid points per axis"),
        Opt("samples", int, 20, "sampled x' per data point for the layer recursion"),
        Opt("cover_eps", float, 1.0, "target cover radius for the constructed cover network"),
        Opt("restarts", int, 64, "random rounding restarts per layer"),
        Opt("robust_override", str, None,
            'JSON {"net1": [...], "net2": [...]} replacing the oracle robust losses (negative control)'),
    ]),
    "rademacher": ("Monte Carlo standard and adversarial Rademacher complexity", [
        Opt("data", str, None, "dataset CSV", required=True),
        Opt("kind", str, "linear", "hypothesis class: linear or network"),
        Opt("r", float, 2.0, "linear: weight norm exponent"),
        Opt("W", float, 1.0, "linear: weight budget"),
        Opt("network", str, None, "network: template network JSON"),
        Opt("gamma", float, 1.0, "network: ramp-loss margin"),
        *ATTACK,
        Opt("trials", int, 200, "Rademacher draws"),
    ]),
    "train": ("train a toy network (optionally with PGD) and report its robust gap", [
        Opt("dataset", str, "gaussian_blobs", "gaussian_blobs or two_moons"),
        Opt("n_train", int, 200, ""), Opt("n_test", int, 200, ""),
        Opt("classes", int, 2, ""), Opt("d", int, 2, "input dimension"),
        Opt("spread", float, 0.3, "blob standard deviation"), Opt("noise", float, 0.1, "moon noise"),
        Opt("B", float, 1.0, "rescale inputs to max l2 norm B"),
        Opt("hidden", _int_list, [8], "hidden widths, comma separated"),
        Opt("activation", str, "relu", ""),
        Opt("epochs", int, 100, ""), Opt("batch_size", int, 32, ""), Opt("lr", float, 0.2, ""),
        Opt("gamma", float, 0.5, "ramp-loss margin"),
        *ATTACK,
        Opt("adversarial", bool, True, "train on PGD examples", flag=True),
        Opt("attack_steps", int, 10, ""), Opt("attack_restarts", int, 1, ""),
        Opt("eval_steps", int, 20, ""), Opt("eval_restarts", int, 3, ""),
        Opt("delta", float, 0.05, "failure probability in (0, 1)"),
        Opt("out_network", str, None, "where to write the trained network JSON"),
        Opt("out_data", str, None, "where to write the train split CSV"),
    ]),
    "cover-verify": ("empirically verify the Maurey uniform cover", [
        Opt("a", float, 1.0, "l1 budget of W"), Opt("b", float, 1.0, "Frobenius budget of X"),
        Opt("eps", float, 0.5, "cover radius"), Opt("d", int, 2, "columns of W"),
        Opt("m", int, 2, "rows of W"), Opt("samples", int, 1000, ""),
        Opt("restarts", int, 64, ""), Opt("n_cols", int, 4, "columns of X"),
    ]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustcover", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (desc, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc)
        sp.add_argument("--config", help="JSON object of option values; unknown keys are rejected")
        for o in list(opts) + COMMON:
            flag = "--" + o.name.replace("_", "-")
            default = f" (default: {o.default})" if o.default is not None else ""
            if o.flag:
                sp.add_argument(flag, dest=o.name, default=None, action=argparse.BooleanOptionalAction,
                                help=o.help + default)
            else:
                sp.add_argument(flag, dest=o.name, default=None, type=o.type, help=o.help + default)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Explicit flags beat ``--config`` values, which beat defaults."""
    opts = {o.name: o for o in list(COMMANDS[command][1]) + COMMON}
    from_file = {}
    if args.config:
        raw = load_json(args.config)
        if not isinstance(raw, dict):
            raise ParseError(args.config, "config must be a JSON object")
        unknown = sorted(set(raw) - set(opts))
        if unknown:
            raise UsageError(f"{args.config}: unknown config keys {unknown}")
        for k, v in raw.items():
            if v is None:
                continue
            try:
                from_file[k] = opts[k].type(v) if not opts[k].flag else bool(v)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{args.config}: bad value for {k!r}: {exc}") from None
    cfg = {}
    for name, o in opts.items():
        val = getattr(args, name)
        if val is None:
            val = from_file.get(name, o.default)
        if val is None and o.required:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")
        cfg[name] = val
    return cfg


def _require(cond, msg):
    if not cond:
        raise UsageError(msg)


def _check_attack(cfg):
    _require(cfg["eps"] >= 0 and math.isfinite(cfg["eps"]), "eps must be finite and >= 0")


def _check_data(net, X, y):
    _require(X.shape[1] == net.input_dim,
             f"data has {X.shape[1]} features but the network expects {net.input_dim}")
    _require(int(y.max()) < net.output_dim, f"label {int(y.max())} >= number of outputs {net.output_dim}")


def _jsonable_config(cfg):
    return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in cfg.items()}


def cmd_bounds(cfg):
    from .bounds import bound_report
    from .network import ramp_margin
    _check_attack(cfg)
    _require(0 < cfg["delta"] < 1, "delta must lie in (0, 1)")
    _require(cfg["gamma"] > 0, "gamma must be positive")
    net = load_network(cfg["network"])
    X, y = load_dataset(cfg["data"])
    _check_data(net, X, y)
    rep = bound_report(net, X, ramp_margin(cfg["gamma"]), cfg["p"], cfg["eps"], cfg["delta"], cfg["B"],
                       cfg["C1"], cfg["C2"], cfg["linear_trials"], cfg["seed"])
    return rep.to_dict(), True


def cmd_lemma_check(cfg):
    from .verify import (build_cover_network, check_final_cover_distance,
                         check_intermediate_adv_example, check_layer_recursion)
    from .network import ramp_margin
    from .rng import as_key
    _check_attack(cfg)
    _require(cfg["gamma"] > 0, "gamma must be positive")
    _require(1 <= cfg["resolution"] <= 401, "resolution must be in [1, 401]")
    _require(cfg["samples"] >= 1, "samples must be >= 1")
    net = load_network(cfg["network"])
    X, y = load_dataset(cfg["data"])
    _check_data(net, X, y)
    _require(net.input_dim <= 3, "the grid oracle needs input dimension <= 3")
    pset, loss = PerturbationSet(cfg["p"], cfg["eps"]), ramp_margin(cfg["gamma"])
    override = None
    if cfg["robust_override"]:
        raw = load_json(cfg["robust_override"])
        if not (isinstance(raw, dict) and {"net1", "net2"} <= set(raw)
                and len(raw["net1"]) == len(raw["net2"]) == len(X)):
            raise ParseError(cfg["robust_override"], 'expected {"net1": [...], "net2": [...]} with one value per row')
        override = (np.asarray(raw["net1"], dtype=np.float64), np.asarray(raw["net2"], dtype=np.float64))
    result = {}
    eps_list = None
    if cfg["network2"]:
        net2 = load_network(cfg["network2"])
        _require(net2.widths == net.widths, "networks must share the architecture")
        result["cover_network"] = None
    else:
        _require(cfg["cover_eps"] > 0, "cover-eps must be positive")
        cover = build_cover_network(net, X, y, pset, loss, cfg["cover_eps"], cfg["resolution"],
                                    cfg["restarts"], as_key(cfg["seed"]).derive("cover"))
        net2, eps_list = cover.network, cover.eps_list
        result["cover_network"] = {"eps_list": cover.eps_list, "k_list": cover.k_list,
                                   "rounds": cover.rounds, "converged": cover.converged}
        result["final_cover_distance"] = check_final_cover_distance(
            net, net2, X, y, pset, loss, eps_list, oracle_resolution=cfg["resolution"]).to_dict()
    inter = check_intermediate_adv_example(net, net2, X, y, pset, loss, cfg["resolution"],
                                           robust_override=override)
    result["intermediate_adversarial_example"] = inter.to_dict()
    result["intermediate_adversarial_example"]["max_gap"] = float(np.max(inter.details["lhs"]))
    gen = as_key(cfg["seed"]).derive("x_prime").generator()
    Xp = np.repeat(X, cfg["samples"], axis=0)
    if pset.eps > 0:
        if pset.p == math.inf:
            Xp = Xp + gen.uniform(-pset.eps, pset.eps, Xp.shape)
        else:
            U = gen.standard_normal(Xp.shape)
            U /= np.linalg.norm(U, axis=1, keepdims=True)
            Xp = Xp + pset.eps * gen.uniform(size=(len(Xp), 1)) ** (1.0 / Xp.shape[1]) * U
    rec = check_layer_recursion(net, net2, Xp, eps_list)
    result["layer_recursion"] = rec.to_dict()
    result["layer_recursion"]["max_delta"] = float(rec.details["deltas"].max())
    passed = all(v["passed"] for k, v in result.items() if isinstance(v, dict) and "passed" in v)
    return result, passed


def cmd_rademacher(cfg):
    from .bounds import linear_sandwich
    from .rademacher import linear_class, mc_adversarial_rc, mc_standard_rc, network_class
    from .network import ramp_margin
    _check_attack(cfg)
    _require(cfg["trials"] >= 2, "trials must be >= 2")
    X, y = load_dataset(cfg["data"])
    pset = PerturbationSet(cfg["p"], cfg["eps"])
    if cfg["kind"] == "linear":
        _require(cfg["W"] > 0 and cfg["r"] >= 1, "need W > 0 and r >= 1")
        _require(set(np.unique(y)) <= {0, 1}, "linear classes need binary labels 0/1")
        labels = 2 * y - 1
        cls = linear_class(cfg["r"], cfg["W"], pset)
    elif cfg["kind"] == "network":
        _require(cfg["network"] is not None, "network classes need --network")
        net = load_network(cfg["network"])
        _check_data(net, X, y)
        labels = y
        cls = network_class(net, ramp_margin(cfg["gamma"]), attack=pset)
    else:
        raise UsageError(f"unknown class kind {cfg['kind']!r}")
    std = mc_standard_rc(cls, X, labels, cfg["trials"], cfg["seed"])
    adv = mc_adversarial_rc(cls, X, labels, cfg["trials"], cfg["seed"])
    result = {"standard": std.to_dict(), "adversarial": adv.to_dict(), "n": len(X)}
    passed = True
    if cfg["eps"] == 0:
        same = bool(np.array_equal(std.values, adv.values))
        result["eps_zero_identical"] = same
        passed &= same
    if cfg["kind"] == "linear" and cfg["r"] == 2.0:
        lo, hi = linear_sandwich(cfg["W"], cfg["eps"], cfg["p"], 2.0, X.shape[1], len(X), std.mean)
        inside = lo - 3 * adv.stderr <= adv.mean <= hi + 3 * adv.stderr
        result["sandwich"] = {"lower": lo, "upper": hi, "contained": bool(inside)}
        passed &= bool(inside)
    return result, passed


def cmd_train(cfg):
    from .bounds import NormProfile, b_tilde, main_bound
    from .network import random_network, ramp_margin
    from .rng import as_key
    from .trainer import DatasetSpec, TrainConfig, adversarial_train, make_dataset, robust_risk_eval, train_error
    _check_attack(cfg)
    _require(0 < cfg["delta"] < 1, "delta must lie in (0, 1)")
    try:
        spec = DatasetSpec(cfg["dataset"], cfg["n_train"], cfg["n_test"], cfg["seed"], cfg["B"],
                           cfg["classes"], cfg["d"], cfg["spread"], cfg["noise"])
        pset = PerturbationSet(cfg["p"], cfg["eps"])
        tcfg = TrainConfig(cfg["epochs"], cfg["batch_size"], cfg["lr"], cfg["gamma"],
                           pset if cfg["adversarial"] else None,
                           AttackConfig(cfg["attack_steps"], None, cfg["attack_restarts"]), cfg["seed"])
        _require(cfg["n_test"] >= 1, "n_test must be >= 1")
        train, test = make_dataset(spec)
        widths = [cfg["d"], *cfg["hidden"], cfg["classes"]]
        net0 = random_network(widths, as_key(cfg["seed"]).derive("init"), cfg["activation"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    loss = ramp_margin(cfg["gamma"])
    net = adversarial_train(net0, train, tcfg, loss)
    ecfg = AttackConfig(cfg["eval_steps"], None, cfg["eval_restarts"], as_key(cfg["seed"]).derive("eval"))
    tr_clean, tr_rob = robust_risk_eval(net, train, pset, ecfg, loss)
    te_clean, te_rob = robust_risk_eval(net, test, pset, ecfg, loss)
    gap = te_rob - tr_rob
    bound = main_bound(NormProfile.from_network(net, loss), b_tilde(cfg["B"], cfg["eps"], cfg["p"], cfg["d"]),
                       len(train), cfg["delta"])
    if cfg["out_network"]:
        save_network(net, cfg["out_network"])
    if cfg["out_data"]:
        save_dataset(train.X, train.y, cfg["out_data"])
    result = {"train": {"clean_risk": tr_clean, "robust_risk": tr_rob, "error": train_error(net, train)},
              "test": {"clean_risk": te_clean, "robust_risk": te_rob, "error": train_error(net, test)},
              "robust_gap": gap, "main_bound": bound.to_dict(),
              "gap_over_bound": gap / bound.value if bound.value > 0 else None,
              "gap_within_bound": bool(gap <= bound.value)}
    return result, gap <= bound.value


def cmd_cover_verify(cfg):
    from .covers import UniformCoverSpec, uniform_cover_verify
    try:
        spec = UniformCoverSpec(cfg["a"], cfg["b"], cfg["eps"], cfg["d"], cfg["m"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _require(cfg["samples"] >= 1 and cfg["restarts"] >= 0 and cfg["n_cols"] >= 1,
             "need samples >= 1, restarts >= 0, n-cols >= 1")
    rep = uniform_cover_verify(spec, cfg["samples"], cfg["restarts"], cfg["seed"], cfg["n_cols"])
    out = rep.to_dict()
    return out, bool(rep.success_rate >= 0.99 and rep.expectation_ok)


HANDLERS = {"bounds": cmd_bounds, "lemma-check": cmd_lemma_check, "rademacher": cmd_rademacher,
            "train": cmd_train, "cover-verify": cmd_cover_verify}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args.command, args)
        result, passed = HANDLERS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"robustcover: error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, UsageError) as exc:
        print(f"robustcover: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = {"artifact": "robustcover", "version": __version__, "command": args.command,
              "config": _jsonable_config(cfg), "passed": bool(passed), "result": result}
    write_json(report, cfg["out"])
    status = "ok" if passed else "FAILED"
    print(f"{args.command}: {status} -> {cfg['out']}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
