"""Command-line front end.

Every command prints (or writes to ``--output``) one document with the
schema ``{config, results, summary}``. Floats are rendered with 17
significant digits so equal runs give equal bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Optional, Sequence

import numpy as np

from . import combinatorics as comb
from .dominated import DominatedSpec
from .engine import DEFAULT_MAX_HORIZON, NonTermination
from .estimation import compare_policies, distribution_agreement, estimate_loss, sample_replications
from .graph import GraphError, parse_graph, random_connected_er
from .models import format_word, parse_policy
from .randomness import ArrivalModel, ConfigError, DeterministicPatience, parse_patience

EXIT_CONFIG = 2
EXIT_NONTERMINATION = 3


def render(obj: Any) -> str:
    """JSON text with floats as ``format(x, '.17g')``; keys keep insertion order."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {render(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(render(v) for v in obj) + "]"
    raise TypeError(f"cannot render {type(obj).__name__}")


def _cell(v: Any) -> str:
    if isinstance(v, (list, tuple, dict)):
        return render(v)
    if isinstance(v, (float, np.floating)):
        return render(v)
    return "" if v is None else str(v)


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    fields = list(dict.fromkeys(k for row in rows for k in row))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_cell(row.get(k)) for k in fields])
    return buf.getvalue()


def _model_from_args(args) -> ArrivalModel:
    if args.patience is not None:
        patience = parse_patience(args.patience)
        if args.p is not None and (not isinstance(patience, DeterministicPatience) or patience.p != args.p):
            raise ConfigError("--p conflicts with --patience")
    elif args.p is not None:
        if args.p < 1:
            raise ConfigError("p must be at least 1")
        patience = DeterministicPatience(args.p)
    else:
        raise ConfigError("give --p or --patience")
    g = _graph(args)
    if args.mu is not None:
        try:
            mu = tuple(float(x) for x in args.mu.split(","))
        except ValueError:
            raise ConfigError(f"bad --mu {args.mu!r}") from None
        if len(mu) != g.n:
            raise ConfigError(f"--mu has {len(mu)} entries for {g.n} classes")
        return ArrivalModel(mu, patience, args.gamma)
    return ArrivalModel.uniform(g.n, patience, args.gamma)


def _graph(args):
    if not hasattr(args, "_graph_obj"):
        args._graph_obj = parse_graph(args.graph)
    return args._graph_obj


def _check_sampler(model: ArrivalModel, algo: str) -> None:
    if algo == "algo2":
        DominatedSpec.for_model(model)
    elif not model.deterministic:
        raise ConfigError(f"{algo} needs deterministic patience")


def _base_config(args, model: Optional[ArrivalModel] = None) -> dict:
    cfg: dict = {"command": args.command, "graph": _graph(args).to_dict()}
    if model is not None:
        cfg["model"] = model.to_dict()
    for key in ("policy", "policies", "algo", "reps", "seed", "forward_steps", "alpha", "max_horizon"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    return cfg


def cmd_sample(args) -> dict:
    model = _model_from_args(args)
    _check_sampler(model, args.algo)
    policy = parse_policy(args.policy)
    records = sample_replications(model, policy, _graph(args), args.algo, args.reps, args.seed,
                                  args.jobs, args.max_horizon)
    for rec in records:
        if model.deterministic:
            rec["word"] = format_word(rec["sample"])
    ts = [-r["T"] for r in records]
    ops = [r["operations"] for r in records]
    summary = {"reps": args.reps, "mean_minus_T": float(np.mean(ts)), "mean_operations": float(np.mean(ops))}
    return {"config": _base_config(args, model), "results": records, "summary": summary}


def cmd_count(args) -> dict:
    g = _graph(args)
    if args.p < 1:
        raise ConfigError("p must be at least 1")
    n_words, table = comb.count_strongly_synchronizing(g, args.p, per_trace=True)
    result: dict = {"p": args.p, "N": n_words}
    if n_words > 0:
        bi, bt = comb.coalescence_bounds(g.n, args.p, n_words)
        result.update(bound_I=bi, bound_T=bt, bounds_assume="uniform mu")
    else:
        result.update(bound_I=None, bound_T=None, diagnostic="no strongly synchronizing word")
    if args.mu is not None:
        mu = tuple(float(x) for x in args.mu.split(","))
        if len(mu) != g.n or abs(sum(mu) - 1) > 1e-12:
            raise ConfigError(f"--mu must be a probability vector over {g.n} classes")
        q = comb.sync_probability(g, args.p, mu, args.gamma)
        result["sync_probability"] = float(q)
        result["bound_T_mu"] = comb.horizon_bound(args.p, q) if q > 0 else None
    if args.enumerate:
        result["N_enumerated"] = comb.brute_force_count(g, args.p)
    if args.per_trace:
        result["per_trace"] = {"".join(map(str, z)): c for z, c in table.items()}
    cfg = {"command": "count", "graph": g.to_dict(), "p": args.p}
    doc = {"config": cfg, "results": [result], "summary": {k: result[k] for k in ("N", "bound_I", "bound_T")}}
    doc.update(doc["summary"])
    return doc


def _loss_rows(name: str, est) -> list[dict]:
    rows = [{"policy": name, "class": i + 1, "rate": r, "se": s, "count": c}
            for i, (r, s, c) in enumerate(zip(est.per_class, est.per_class_se, est.counts))]
    rows.append({"policy": name, "class": "total", "rate": est.total, "se": est.total_se,
                 "count": sum(est.counts)})
    return rows


def cmd_loss(args) -> dict:
    model = _model_from_args(args)
    _check_sampler(model, args.algo)
    policy = parse_policy(args.policy)
    est = estimate_loss(model, policy, _graph(args), args.reps, args.seed, args.algo, args.jobs,
                        args.max_horizon)
    return {"config": _base_config(args, model), "results": _loss_rows(policy.name, est),
            "summary": est.to_dict()}


def cmd_compare(args) -> dict:
    model = _model_from_args(args)
    _check_sampler(model, args.algo)
    policies = [parse_policy(s) for s in args.policies]
    if len(policies) < 2:
        raise ConfigError("compare needs at least two policies")
    res = compare_policies(model, policies, _graph(args), args.reps, args.seed, args.algo, args.jobs,
                           args.max_horizon)
    rows = []
    for name, est in res.estimates.items():
        rows.extend(_loss_rows(name, est))
    return {"config": _base_config(args, model), "results": rows, "summary": res.to_dict()}


def cmd_validate(args) -> dict:
    model = _model_from_args(args)
    _check_sampler(model, args.algo)
    policy = parse_policy(args.policy)
    rep = distribution_agreement(model, policy, _graph(args), args.algo, args.reps, args.forward_steps,
                                 args.seed, args.alpha)
    return {"config": _base_config(args, model), "results": [rep.to_dict()],
            "summary": {"passed": rep.passed, "pvalue": rep.pvalue}}


def cmd_gen_graph(args) -> dict:
    g = random_connected_er(args.n, args.q, args.seed, args.max_attempts)
    cfg = {"command": "gen-graph", "n": args.n, "q": args.q, "seed": args.seed}
    doc = {"config": cfg, "results": [[i, j] for i, j in g.edges], "summary": {"connected": g.is_connected()}}
    # the document doubles as a graph file
    doc.update(g.to_dict())
    return doc


def _csv_rows(command: str, doc: dict) -> list[dict]:
    if command == "gen-graph":
        return [{"i": i, "j": j} for i, j in doc["results"]]
    if command == "count":
        row = {k: v for k, v in doc["results"][0].items() if k != "per_trace"}
        rows = [row]
        for z, c in doc["results"][0].get("per_trace", {}).items():
            rows.append({"trace": z, "N": c})
        return rows
    if command == "sample":
        return [{k: v for k, v in r.items()} for r in doc["results"]]
    return list(doc["results"])


def _add_model_args(sp, algo_default="algo3"):
    sp.add_argument("--graph", default="paw", help="paw, path:<n>, complete:<n> or a JSON file")
    sp.add_argument("--p", type=int, help="deterministic patience p (items stay p+eps slots)")
    sp.add_argument("--patience", help="deterministic:<p> or discrete:<v>@<prob>,...")
    sp.add_argument("--gamma", type=float, default=0.0, help="latency probability")
    sp.add_argument("--mu", help="comma-separated class probabilities (default uniform)")
    sp.add_argument("--algo", choices=("algo2", "algo3", "cftp"), default=algo_default)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--max-horizon", type=int, default=DEFAULT_MAX_HORIZON)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perfmatch", description="Perfect sampling of matching models with reneging")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--output", help="write here instead of stdout")
    # the same options after the subcommand; SUPPRESS keeps top-level values
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    common.add_argument("--output", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    sp = sub.add_parser("sample", help="draw perfect samples")
    _add_model_args(sp)
    sp.add_argument("--policy", default="fcfm")

    sp = sub.add_parser("count", help="count strongly synchronizing words")
    sp.add_argument("--graph", default="paw")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--mu")
    sp.add_argument("--gamma", type=float, default=0.0)
    sp.add_argument("--enumerate", action="store_true", help="also brute-force the count")
    sp.add_argument("--per-trace", action="store_true")

    sp = sub.add_parser("loss", help="estimate per-class loss rates")
    _add_model_args(sp)
    sp.add_argument("--policy", default="fcfm")

    sp = sub.add_parser("compare", help="compare policies on common random numbers")
    _add_model_args(sp)
    sp.add_argument("--policies", nargs="+", default=["fcfm", "ml"])

    sp = sub.add_parser("validate", help="chi-square check against a forward run")
    _add_model_args(sp)
    sp.add_argument("--policy", default="fcfm")
    sp.add_argument("--forward-steps", type=int, default=10**6)
    sp.add_argument("--alpha", type=float, default=0.01)

    sp = sub.add_parser("gen-graph", help="seeded connected Erdos-Renyi graph")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--q", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-attempts", type=int, default=100_000)
    return ap


COMMANDS = {
    "sample": cmd_sample,
    "count": cmd_count,
    "loss": cmd_loss,
    "compare": cmd_compare,
    "validate": cmd_validate,
    "gen-graph": cmd_gen_graph,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(render({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for key in ("reps", "jobs"):
        if getattr(args, key, 1) < 1:
            return _fail("config", f"--{key} must be at least 1", EXIT_CONFIG)
    try:
        doc = COMMANDS[args.command](args)
    except (ConfigError, GraphError, ValueError) as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except NonTermination as exc:
        return _fail("non-termination", str(exc), EXIT_NONTERMINATION)
    text = render(doc) + "\n" if args.format == "json" else to_csv(_csv_rows(args.command, doc))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
