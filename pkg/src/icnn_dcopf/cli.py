"""Command line entry point: ``icnn-dcopf <command> [--config file.json] [flags]``.

Every command reads defaults, then the JSON config, then explicit flags; the
effective settings are echoed into the JSON report.  The exit code is 0 only
when every check the command asserts has passed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import cases
from .audits import DeskAuditConfig, same_region_audit, single_bus_cost, unseen_segment_audit
from .datasets import Dataset, generate_dataset
from .evaluation import (UnseenConfig, bench, curve_rows, evaluate, learned_price_thresholds,
                         run_unseen_region_experiment, train_end_to_end, unseen_train_config)
from .exceptions import DcopfError
from .grid import build_flow_basis, load_case
from .icnn.baseline import MlpModel
from .icnn.network import IcnnModel, is_convex_on, value_and_gradient
from .icnn.training import TrainConfig, init_for_data, loss_trend_decreasing, train

CASES = {
    "single_bus": cases.single_bus_case,
    "two_bus": cases.two_bus_case,
    "triangle": cases.triangle_case,
    "congested_triangle": cases.congested_triangle_case,
    "ieee14_like": cases.ieee14_like_case,
}

DEFAULTS = {
    "gen-data": {"case": "ieee14_like", "variation": 0.3, "count": 2000, "seed": 0,
                 "out": "data.jsonl", "test_fraction": 0.0},
    "train": {"case": "ieee14_like", "data": "data.jsonl", "helper": None, "model": "icnn",
              "out": "model.json", "history": None, "seed": 0, "convexity_triples": 1000,
              "train": {}},
    "eval": {"case": "ieee14_like", "data": "data.jsonl", "model_path": "model.json",
             "mode": None, "mismatch_tol": 0.003, "eps_act": None, "flow_eps": None,
             "flow_scale": "dual", "min_optimal": None, "report": None, "curve_csv": None,
             "curve_origin": None, "curve_direction": None, "curve_steps": 101, "curve_t_max": 1.0},
    "audit-generalization": {"seed": 0, "report": None, "curve_csv_prefix": None, "audit": {}},
    "unseen-experiment": {"case": "ieee14_like", "seed": 0, "report": None, "unseen": {},
                          "train": {}, "margin": 10.0},
    "bench": {"case": "ieee14_like", "data": "data.jsonl", "model_path": "model.json",
              "eps_act": None, "flow_eps": None, "repeats": 1, "limit": None, "report": None},
}


def resolve_case(spec):
    """A fixture name or a path to a case JSON file."""
    if spec in CASES:
        return CASES[spec]()
    return load_case(spec)


def load_model(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") == "icnn":
        return IcnnModel.from_dict(doc), "icnn"
    if doc.get("format") == "mlp":
        return MlpModel.from_dict(doc), "end_to_end"
    raise ValueError(f"{path} is not a saved model")


def _settings(command, args):
    """Defaults, then the config file, then explicit flags."""
    out = json.loads(json.dumps(DEFAULTS[command]))
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        unknown = set(doc) - set(out)
        if unknown:
            raise ValueError(f"unknown config keys for {command}: {sorted(unknown)}")
        out.update(doc)
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        if key.startswith("train_"):
            out.setdefault("train", {})[key[len("train_"):]] = value
        elif key.startswith("unseen_"):
            out.setdefault("unseen", {})[key[len("unseen_"):]] = value
        else:
            out[key] = value
    return out


def _write_json(path, doc):
    if path:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _print_checks(checks):
    width = max((len(k) for k in checks), default=0)
    for name, ok in checks.items():
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}")
    return 0 if all(checks.values()) else 1


def _train_config(doc, seed) -> TrainConfig:
    doc = dict(doc)
    doc.setdefault("seed", seed)
    return TrainConfig.from_dict(doc)


def cmd_gen_data(s):
    case = resolve_case(s["case"])
    data = generate_dataset(case, float(s["variation"]), int(s["count"]), int(s["seed"]))
    checks = {"infeasible rate <= 50%": True, "dataset non-empty": len(data) > 0}
    if s["test_fraction"]:
        train_set, test_set = data.split(float(s["test_fraction"]), int(s["seed"]))
        stem = Path(s["out"])
        train_set.save(stem.with_suffix(".train.jsonl"))
        test_set.save(stem.with_suffix(".test.jsonl"))
    data.save(s["out"])
    print(f"samples {len(data)}  degenerate {int(np.sum(data.degenerate))}  -> {s['out']}")
    return _print_checks(checks)


def cmd_train(s):
    case = resolve_case(s["case"])
    basis = build_flow_basis(case)
    data = Dataset.load_jsonl(s["data"])
    if s["model"] == "mlp":
        t = s.get("train", {})
        model = train_end_to_end(data, tuple(t.get("hidden", (64, 64, 64))), int(t.get("epochs", 300)),
                                 float(t.get("learning_rate", 1e-3)), int(s["seed"]),
                                 int(t.get("batch_size", 32)))
        model.save(s["out"])
        print(f"saved MLP -> {s['out']}")
        return _print_checks({"training finished": True})
    cfg = _train_config(s.get("train", {}), int(s["seed"]))
    helper = Dataset.load_jsonl(s["helper"]).unlabeled() if s["helper"] else None
    model = init_for_data(data, cfg.hidden, cfg.seed)
    result = train(model, data, helper, cfg, case, basis)
    result.model.save(s["out"])
    if s["history"]:
        _write_json(s["history"], {"config": cfg.to_dict(), "history": result.history})
    rng = np.random.default_rng(cfg.seed)
    lo, hi = data.load.min(axis=0), data.load.max(axis=0)
    convex = all(is_convex_on(result.model, rng.uniform(lo, hi), rng.uniform(lo, hi), rng.random())
                 for _ in range(int(s["convexity_triples"])))
    final = result.history[-1] if result.history else {}
    print(f"epochs {len(result.history)}  final loss {final.get('loss', float('nan')):.6g}  "
          f"trend decreasing {loss_trend_decreasing(result.history)}  -> {s['out']}")
    return _print_checks({"finite losses": True, "midpoint convexity": convex})


def _curve_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "J_star", "J_hat", "slope_star", "slope_hat"])
        w.writerows(rows)


def cmd_eval(s):
    case = resolve_case(s["case"])
    basis = build_flow_basis(case)
    data = Dataset.load_jsonl(s["data"])
    model, kind = load_model(s["model_path"])
    mode = s["mode"] or kind
    eps_default, flow_default = learned_price_thresholds(case)
    eps_act = eps_default if s["eps_act"] is None else float(s["eps_act"])
    flow_eps = flow_default if s["flow_eps"] is None else float(s["flow_eps"])
    report = evaluate(case, basis, model, data, mode, float(s["mismatch_tol"]), eps_act, flow_eps,
                      s["flow_scale"], time_exact=True)
    print(report.text())
    doc = {"settings": s, "report": report.to_dict()}
    checks = {"every sample classified": report.optimal + report.feasible + report.infeasible == report.n}
    if s["min_optimal"] is not None:
        checks[f"optimal >= {s['min_optimal']}%"] = report.percentages()["optimal"] >= float(s["min_optimal"])
    if s["curve_csv"] and mode == "icnn":
        origin = (np.array(s["curve_origin"], dtype=float) if s["curve_origin"] is not None
                  else 0.7 * case.load_nominal)
        direction = (np.array(s["curve_direction"], dtype=float) if s["curve_direction"] is not None
                     else 0.6 * case.load_nominal)
        _curve_csv(s["curve_csv"], curve_rows(model, case, basis, origin, direction,
                                              int(s["curve_steps"]), float(s["curve_t_max"])))
    doc["checks"] = checks
    _write_json(s["report"], doc)
    return _print_checks(checks)


def _single_bus_curve(path, model):
    rows = []
    for t in np.linspace(0.0, 3.0, 301):
        J_hat, mu_hat = value_and_gradient(model, np.array([t]))
        rows.append((float(t), float(single_bus_cost(t)), float(J_hat),
                     float(np.select([t < 1, t < 2], [1.0, 2.0], 3.0)), float(mu_hat[0])))
    _curve_csv(path, rows)


def cmd_audit(s):
    audit_doc = dict(s.get("audit", {}))
    audit_doc.setdefault("seed", int(s["seed"]))
    if "hidden" in audit_doc:
        audit_doc["hidden"] = tuple(audit_doc["hidden"])
    cfg = DeskAuditConfig(**audit_doc)
    t0 = time.perf_counter()
    same, same_model = same_region_audit(cfg)
    unseen, unseen_model = unseen_segment_audit(cfg)
    doc = {"settings": s, "same_region": same, "unseen_region": unseen,
           "seconds": time.perf_counter() - t0}
    if s["curve_csv_prefix"]:
        _single_bus_curve(f"{s['curve_csv_prefix']}same_region.csv", same_model)
        _single_bus_curve(f"{s['curve_csv_prefix']}unseen_region.csv", unseen_model)
    print(f"same region: loss {same['training_loss']:.3e}  max |mu-2| {same['max_abs_mu_minus_2']:.3e}")
    print(f"unseen region: mu in [{unseen['mu_min']:.4f}, {unseen['mu_max']:.4f}]  "
          f"containment {100 * unseen['containment_rate']:.1f}%")
    checks = {"same-region gradient constant": same["passed"],
              "unseen-region gradient bounded": unseen["passed"]}
    doc["checks"] = checks
    _write_json(s["report"], doc)
    return _print_checks(checks)


def unseen_checks(results, margin=10.0):
    pct = {k: v["report"]["percent"]["optimal"] for k, v in results.items()}
    return {f"with helper >= without helper + {margin:g}":
                pct["icnn_helper"] >= pct["icnn_no_helper"] + margin,
            "with helper >= end-to-end": pct["icnn_helper"] >= pct["end_to_end"],
            "without helper >= end-to-end": pct["icnn_no_helper"] >= pct["end_to_end"]}


def cmd_unseen(s):
    case = resolve_case(s["case"])
    basis = build_flow_basis(case)
    u = dict(s.get("unseen", {}))
    u.setdefault("seed", int(s["seed"]))
    for key in ("buses", "ranges", "test_anchor", "mlp_hidden"):
        if key in u:
            u[key] = tuple(tuple(v) if isinstance(v, list) else v for v in u[key])
    cfg = UnseenConfig(**u)
    tcfg = unseen_train_config(**{k: tuple(v) if isinstance(v, list) else v
                                  for k, v in s.get("train", {}).items()}).validate()
    t0 = time.perf_counter()
    out = run_unseen_region_experiment(case, basis, cfg, tcfg,
                                       progress=lambda m: print(m, file=sys.stderr))
    out["seconds"] = time.perf_counter() - t0
    rows = [(name, r["report"]["percent"]) for name, r in out["results"].items()]
    print(f"{'predictor':<22}{'optimal %':>10}{'feasible %':>12}{'infeasible %':>14}")
    for name, p in rows:
        print(f"{name:<22}{p['optimal']:>10.2f}{p['feasible']:>12.2f}{p['infeasible']:>14.2f}")
    checks = unseen_checks(out["results"], float(s["margin"]))
    out.update({"settings": s, "checks": checks})
    _write_json(s["report"], out)
    return _print_checks(checks)


def cmd_bench(s):
    case = resolve_case(s["case"])
    basis = build_flow_basis(case)
    data = Dataset.load_jsonl(s["data"])
    if s["limit"] is not None:
        data = data.subset(np.arange(min(int(s["limit"]), len(data))))
    model, kind = load_model(s["model_path"])
    if kind != "icnn":
        raise ValueError("bench needs an ICNN model")
    eps_default, flow_default = learned_price_thresholds(case)
    eps_act = eps_default if s["eps_act"] is None else float(s["eps_act"])
    flow_eps = flow_default if s["flow_eps"] is None else float(s["flow_eps"])
    out = bench(case, basis, model, data, eps_act, flow_eps, int(s["repeats"]))
    print(f"{'samples':<16}{len(out['rows']):>12}")
    if out["rows"]:
        print(f"{'median simplex':<16}{out['median_simplex'] * 1e3:>10.3f}ms")
        print(f"{'median icnn':<16}{out['median_icnn'] * 1e3:>10.3f}ms")
        print(f"{'ratio':<16}{out['ratio']:>12.2f}")
    out["settings"] = s
    _write_json(s["report"], out)
    return _print_checks({"timing table produced": True})


def build_parser():
    p = argparse.ArgumentParser(prog="icnn-dcopf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file with settings; flags override it")
        sp.set_defaults(func=func)
        return sp

    g = add("gen-data", cmd_gen_data, "sample loads and solve them")
    g.add_argument("--case")
    g.add_argument("--variation", type=float)
    g.add_argument("--count", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--test-fraction", type=float, help="also write .train/.test splits")

    t = add("train", cmd_train, "train an ICNN (or the MLP baseline)")
    t.add_argument("--case")
    t.add_argument("--data")
    t.add_argument("--helper", help="JSONL of helper loads")
    t.add_argument("--model", choices=["icnn", "mlp"])
    t.add_argument("--out")
    t.add_argument("--history", help="write the loss history JSON here")
    t.add_argument("--seed", type=int)
    t.add_argument("--convexity-triples", type=int)
    t.add_argument("--epochs", dest="train_epochs", type=int)
    t.add_argument("--learning-rate", dest="train_learning_rate", type=float)
    t.add_argument("--batch-size", dest="train_batch_size", type=int)
    t.add_argument("--optimizer", dest="train_optimizer", choices=["sgd", "adam"])
    t.add_argument("--lr-decay", dest="train_lr_decay", type=float)
    t.add_argument("--hidden", dest="train_hidden", type=lambda v: tuple(int(a) for a in v.split(",")))
    t.add_argument("--kkt-weight", dest="train_kkt_weight", type=float)
    t.add_argument("--eps-act", dest="train_eps_act", type=float)
    t.add_argument("--ascent-weight", dest="train_ascent_weight", type=float)

    e = add("eval", cmd_eval, "classify predicted dispatch on a dataset")
    e.add_argument("--case")
    e.add_argument("--data")
    e.add_argument("--model", dest="model_path")
    e.add_argument("--mode", choices=["icnn", "end_to_end"])
    e.add_argument("--mismatch-tol", type=float)
    e.add_argument("--eps-act", type=float)
    e.add_argument("--flow-eps", type=float)
    e.add_argument("--flow-scale", choices=["dual", "limit"])
    e.add_argument("--min-optimal", type=float, help="assert this optimal percentage")
    e.add_argument("--report")
    e.add_argument("--curve-csv")
    e.add_argument("--curve-steps", type=int)
    e.add_argument("--curve-t-max", type=float)

    a = add("audit-generalization", cmd_audit, "desk-scale generalization audits")
    a.add_argument("--seed", type=int)
    a.add_argument("--report")
    a.add_argument("--curve-csv-prefix")

    u = add("unseen-experiment", cmd_unseen, "held-out price region comparison")
    u.add_argument("--case")
    u.add_argument("--seed", type=int)
    u.add_argument("--report")
    u.add_argument("--margin", type=float)
    u.add_argument("--samples", dest="unseen_samples", type=int)
    u.add_argument("--helper-samples", dest="unseen_helper_samples", type=int)
    u.add_argument("--ascent-weight", dest="unseen_ascent_weight", type=float)
    u.add_argument("--epochs", dest="train_epochs", type=int)

    b = add("bench", cmd_bench, "simplex versus price-based reconstruction timing")
    b.add_argument("--case")
    b.add_argument("--data")
    b.add_argument("--model", dest="model_path")
    b.add_argument("--eps-act", type=float)
    b.add_argument("--flow-eps", type=float)
    b.add_argument("--repeats", type=int)
    b.add_argument("--limit", type=int)
    b.add_argument("--report")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args.command, args)
        return args.func(settings)
    except (DcopfError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
