"""Command-line interface: ``maxsam solve | sample | analyze | diagnose | microcanonical``.

Exit codes: 0 success, 2 invalid usage or input, 3 file-system errors,
4 solver non-convergence. Errors are reported as one ``maxsam: error: ...``
line on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import analysis, ensembles as ens, microcanonical as mc, sampler
from .exceptions import MaxSamError
from .netcore import (
    MODELS,
    ConstraintSet,
    Graph,
    compute_constraints,
    model_spec,
    parse_constraint_file,
    parse_edge_list,
    parse_matrix,
)
from .solver import solve
from .validation import check_eps, check_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NOT_CONVERGED = 4


class UsageError(MaxSamError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read(path: str) -> str:
    with open(path) as fh:
        return fh.read()


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _input_form(args, required: bool = True) -> Optional[tuple]:
    forms = [(k, getattr(args, k)) for k in ("matrix", "list", "par") if getattr(args, k, None)]
    if len(forms) > 1:
        raise UsageError("give exactly one of --matrix, --list, --par")
    if not forms:
        if required:
            raise UsageError("one of --matrix, --list, --par is required")
        return None
    return forms[0]


def _load_graph(kind: str, path: str, model: str, binarize: bool) -> Graph:
    spec = model_spec(model)
    weighted = spec.weighted or binarize
    text = _read(path)
    if kind == "matrix":
        return parse_matrix(text, directed=spec.directed, weighted=weighted)
    return parse_edge_list(text, directed=spec.directed, weighted=weighted)


def _load_target(args, model: str):
    """Observed constraints (and graph, when available) from the input flags."""
    form = _input_form(args)
    kind, path = form
    if kind == "par":
        return parse_constraint_file(_read(path), model), None
    g = _load_graph(kind, path, model, args.binarize)
    return compute_constraints(g, model, binarize=args.binarize), g


def _params_doc(model, hv, report, observed, labels=None, eps=None) -> dict:
    doc = {
        "model": model,
        "n": hv.n,
        "log_likelihood": report.log_likelihood,
        "max_rel_error": report.max_rel_error,
        "iterations": report.iterations,
        "boundary_flags": [list(f) for f in report.boundary_flags],
        "converged": bool(report.converged),
        "observed": {b: observed[b].tolist() for b in MODELS[model].blocks},
    }
    for name in MODELS[model].params:
        doc[name] = [float(v) for v in getattr(hv, name)]
    if labels is not None:
        doc["labels"] = list(labels)
    if eps is not None:
        doc["eps"] = eps
    return doc


def load_params(path: str):
    """Read a params.json file into ``(model, HiddenVariables, observed, doc)``."""
    doc = json.loads(_read(path))
    try:
        model = check_model(doc["model"])
        spec = MODELS[model]
        hv = ens.HiddenVariables(model, **{p: np.asarray(doc[p], dtype=float) for p in spec.params})
    except KeyError as exc:
        raise UsageError(f"params file lacks field {exc.args[0]!r}") from None
    observed = None
    if "observed" in doc:
        observed = ConstraintSet(model, {b: doc["observed"][b] for b in spec.blocks})
    return model, hv, observed, doc


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    model = check_model(args.model)
    eps = check_eps(args.eps)
    observed, g = _load_target(args, model)
    init = None
    if args.init:
        init_model, init, _, _ = load_params(args.init)
        if init_model != model:
            raise UsageError(f"--init parameters are for {init_model}, not {model}")
    hv, report = solve(model, observed, eps=eps, max_iter=args.max_iter, init=init,
                       force_refine=args.force_refine)
    os.makedirs(args.out, exist_ok=True)
    labels = g.labels if g is not None else None
    _write_json(os.path.join(args.out, "params.json"),
                _params_doc(model, hv, report, observed, labels, eps))
    if not report.converged:
        print(f"maxsam: error: solver did not converge ({report.message}, "
              f"max_rel_error={report.max_rel_error:.3g})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _require_seed(args):
    if args.seed is None:
        raise UsageError("--seed is required")


def cmd_sample(args) -> int:
    _require_seed(args)
    if args.params is None:
        raise UsageError("--params is required")
    if args.count is None or args.count < 1:
        raise UsageError("--count must be a positive integer")
    model, hv, _, doc = load_params(args.params)
    ss = sampler.sample_ensemble(model, hv, args.count, args.seed, retain=args.retain,
                                 threads=_threads(args))
    extra = {"labels": doc["labels"]} if "labels" in doc else None
    sampler.write_samples(ss, args.out, params_hash=sampler.file_sha256(args.params), extra=extra)
    return EXIT_OK


def _threads(args) -> int:
    t = getattr(args, "threads", None)
    if t is None:
        return os.cpu_count() or 1
    if t < 1:
        raise UsageError("--threads must be positive")
    return t


def _read_samples(dirpath: str, model: str, n: int):
    spec = model_spec(model)
    gdir = os.path.join(dirpath, "samples")
    if not os.path.isdir(gdir):
        raise FileNotFoundError(f"no samples directory in {dirpath}")
    graphs = []
    for name in sorted(os.listdir(gdir)):
        if name.endswith(".tsv"):
            graphs.append(parse_edge_list(_read(os.path.join(gdir, name)), n=n,
                                          directed=spec.directed, weighted=spec.weighted))
    return graphs


def cmd_analyze(args) -> int:
    if args.params is None:
        raise UsageError("--params is required")
    if not 0 < args.ci < 1:
        raise UsageError("--ci must lie in (0, 1)")
    model, hv, observed, _ = load_params(args.params)
    form = _input_form(args, required=False)
    g = None
    if form is not None:
        if form[0] == "par":
            observed = parse_constraint_file(_read(form[1]), model)
        else:
            g = _load_graph(form[0], form[1], model, args.binarize)
            observed = compute_constraints(g, model, binarize=args.binarize)
    if observed is None:
        raise UsageError("no observed constraints: pass --matrix, --list or --par")
    if observed.n != hv.n:
        raise UsageError("observed input and parameters have different sizes")
    blocks = MODELS[model].blocks
    if args.stats:
        stats = [s.strip() for s in args.stats.split(",") if s.strip()]
        for s in stats:
            if s not in blocks:
                analysis.statistic_function(s)
    else:
        stats = list(blocks) + (list(analysis.statistics_for(model)) if g is not None else [])
    graph_stats = [s for s in stats if s not in blocks]
    if graph_stats and g is None:
        raise UsageError("graph statistics need the observed graph (--matrix or --list)")
    if graph_stats and model_spec(model).directed:
        raise UsageError("graph statistics are defined for undirected models only")

    if args.samples:
        graphs = _read_samples(args.samples, model, hv.n)
        source = graphs
        fns = {s: analysis.statistic_function(s) for s in graph_stats}
        ss = None
    else:
        _require_seed(args)
        if args.count is None or args.count < 1:
            raise UsageError("--count must be a positive integer (or pass --samples)")
        fns = {s: analysis.statistic_function(s) for s in graph_stats}
        ss = sampler.sample_ensemble(model, hv, args.count, args.seed, threads=_threads(args),
                                     node_stats=fns)
        source = ss
    os.makedirs(args.out, exist_ok=True)
    summary = {"model": model, "n": hv.n, "ci": args.ci, "statistics": {}}
    for s in stats:
        if s in blocks:
            es = _block_statistic(source, s, observed, args.ci, model)
        else:
            es = analysis.ensemble_statistic(source, s, g, level=args.ci, model=model)
        analysis.write_statistic_csv(os.path.join(args.out, f"stat_{s}.csv"), es)
        defined = np.isfinite(es.observed) & np.isfinite(es.lower)
        summary["statistics"][s] = {
            "count": es.count,
            "observed_within_ci": float(np.mean(es.within("observed")[defined])) if defined.any() else None,
            "mean_within_ci": float(np.mean(es.within("mean")[defined])) if defined.any() else None,
        }
    report = analysis.fluctuation_report(model, hv, observed)
    summary["fluctuations"] = {}
    for name, blk in report.blocks.items():
        analysis.write_fluctuation_csv(os.path.join(args.out, f"fluctuation_{name}.csv"), blk)
        summary["fluctuations"][name] = {
            "bound_kind": blk.bound_kind,
            "violations": [int(i) for i in blk.violations()],
        }
    if ss is not None:
        exact = ens.expected_matrices(model, hv)
        conv = analysis.convergence_report(ss, exact)
        summary["convergence"] = conv.to_dict()
        analysis.write_scatter_csv(os.path.join(args.out, "convergence_adjacency.csv"),
                                   exact.adjacency, ss.mean_binary)
        if exact.weight is not None:
            analysis.write_scatter_csv(os.path.join(args.out, "convergence_weight.csv"),
                                       exact.weight, ss.mean_weight)
    _write_json(os.path.join(args.out, "report.json"), summary)
    return EXIT_OK


def _block_statistic(source, name, observed, level, model):
    """Ensemble statistic of a constraint block against given observed values."""
    if isinstance(source, sampler.SampleSet):
        vals = source.constraint_block(name).astype(float)
    else:
        vals = np.array([compute_constraints(g, model)[name] for g in source], dtype=float)
    count = vals.shape[0]
    need = int(np.ceil(2.0 / (1.0 - level) - 1e-9))
    if count < need:
        raise UsageError(f"{count} samples are too few for a {level:g} interval (need {need})")
    alpha = 1.0 - level
    lo, hi = np.percentile(vals, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0)
    return analysis.EnsembleStatistic(name, observed[name].astype(float), vals.mean(axis=0),
                                      lo, hi, level, count)


def cmd_diagnose(args) -> int:
    model = check_model(args.model)
    form = _input_form(args)
    if form[0] == "par":
        raise UsageError("diagnose needs a graph (--matrix or --list)")
    g = _load_graph(form[0], form[1], model, args.binarize)
    rep = analysis.heterogeneity_report(g, symmetrize=True)
    doc = rep.to_dict()
    doc["model"] = model
    if args.params:
        pmodel, hv, _, _ = load_params(args.params)
        A = ens.expected_matrices(pmodel, hv).adjacency
        off = ~np.eye(hv.n, dtype=bool)
        doc["exact_probabilities_in_unit_interval"] = bool(np.all((A[off] >= 0) & (A[off] <= 1)))
        doc["exact_max_probability"] = float(A[off].max()) if off.any() else 0.0
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "heterogeneity.json"), doc)
    sampler.write_matrix_csv(os.path.join(args.out, "naive_probabilities.csv"), rep.naive_table)
    if rep.naive_weight_table is not None:
        sampler.write_matrix_csv(os.path.join(args.out, "naive_weights.csv"), rep.naive_weight_table)
    return EXIT_OK


def cmd_microcanonical(args) -> int:
    _require_seed(args)
    if args.params is None:
        raise UsageError("--params is required")
    if args.count is None or args.count < 1:
        raise UsageError("--count must be a positive integer")
    model, hv, observed, doc = load_params(args.params)
    form = _input_form(args, required=False)
    if form is not None:
        observed, _ = _load_target(args, model)
    if observed is None:
        raise UsageError("no target constraints: pass --matrix, --list or --par")
    accepted, est = mc.filter_stream(model, hv, observed, args.count, args.seed,
                                     threads=_threads(args))
    os.makedirs(args.out, exist_ok=True)
    mdir = os.path.join(args.out, "microcanonical")
    os.makedirs(mdir, exist_ok=True)
    for idx, g in accepted:
        with open(os.path.join(mdir, sampler.sample_file_name(idx, args.count)), "w") as fh:
            fh.write(sampler.edge_list_text(g))
    out = est.to_dict()
    out["seed"] = args.seed
    out["accepted_indices"] = [int(i) for i, _ in accepted]
    out["params_sha256"] = sampler.file_sha256(args.params)
    _write_json(os.path.join(args.out, "estimate.json"), out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="maxsam", description="Maximum-entropy network null models.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def inputs(sp):
        sp.add_argument("--matrix", help="matrix file")
        sp.add_argument("--list", help="edge-list file")
        sp.add_argument("--par", help="constraint file")
        sp.add_argument("--binarize", action="store_true", help="read weights > 0 as links")

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None)

    s = sub.add_parser("solve", help="fit hidden variables")
    s.add_argument("--model", required=True)
    inputs(s)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--init", help="previous params.json used as starting point")
    s.add_argument("--max-iter", type=int, default=10_000)
    s.add_argument("--force-refine", action="store_true")
    common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sample", help="draw graphs from a fitted ensemble")
    s.add_argument("--params")
    s.add_argument("--count", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--retain", action="store_true")
    common(s)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("analyze", help="ensemble statistics, fluctuations, convergence")
    s.add_argument("--params")
    inputs(s)
    s.add_argument("--samples", help="directory written by 'maxsam sample --retain'")
    s.add_argument("--count", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--stats")
    s.add_argument("--ci", type=float, default=0.95)
    common(s)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("diagnose", help="structural cut-off and naive-probability diagnostics")
    s.add_argument("--model", required=True)
    inputs(s)
    s.add_argument("--params")
    common(s)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("microcanonical", help="filter canonical samples to exact matches")
    s.add_argument("--params")
    inputs(s)
    s.add_argument("--count", type=int)
    s.add_argument("--seed", type=int)
    common(s)
    s.set_defaults(func=cmd_microcanonical)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: solve, sample, analyze, diagnose, microcanonical")
        code = args.func(args)
    except OSError as exc:
        print(f"maxsam: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MaxSamError, ValueError, json.JSONDecodeError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"maxsam: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
