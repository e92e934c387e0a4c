"""Command-line entry points."""

import argparse
import sys
from dataclasses import replace

from . import harness, matcher, sae, synth


def _add_common(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--method", choices=list(harness.METHODS) + ["all"],
                        help="restrict to one method (default: all)")
    parser.add_argument("--repeats", type=int, help="repeats per class pair")
    parser.add_argument("--jobs", type=int, help="worker processes")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--full-rank-only", action="store_true", default=None,
                        help="search only full-rank plans")
    parser.add_argument("--uncentered", action="store_true", default=None,
                        help="correlate raw products instead of centered ones")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--data-dir", help="directory for the cached dataset")
    parser.add_argument("--smoke", action="store_true",
                        help="desk-scale run: 3 pairs, 3 repeats")


def _build_config(args):
    overrides = {
        "repeats": args.repeats,
        "jobs": args.jobs,
        "seed": args.seed,
        "data_dir": args.data_dir,
    }
    if args.method and args.method != "all":
        overrides["methods"] = args.method
    if args.full_rank_only:
        overrides["full_rank_only"] = True
    if args.uncentered:
        overrides["center"] = False
    config = harness.load_config(args.config, overrides)
    if args.smoke:
        config = harness.apply_smoke(config)
    return config


def _cmd_run(args):
    config = _build_config(args)
    if args.search:
        config = replace(config, matched_plans=None)
    report = harness.run_experiment(config)
    harness.emit_reports(report, args.out)
    for key in report.method_keys():
        print(f"{key}: mean accuracy {report.mean_accuracy(key):.4f}")
    if report.matched_plans:
        print("matched plans: " + "; ".join(p.label for p in report.matched_plans))
    print(f"excluded trials: {report.excluded}")
    print(f"reports written to {args.out}/")
    return 0


def _cmd_search(args):
    config = _build_config(args)
    source, target = harness.resolve_dataset(config)
    selected, records = harness.search_plans(source, target, config)
    ranked = [r for r in records if r.get("kind") == "search-rank"]
    for rec in ranked:
        print(f"{rec['rank'] + 1:3d}. {rec['plan']:24s} objective {rec['objective']:.4f}")
    print("selected: " + "; ".join(p.label for p in selected))
    return 0


def _cmd_sweep(args):
    config = _build_config(args)
    widths = [int(w) for w in args.widths.split(",")]
    table, records = harness.neuron_sweep(config, widths)
    harness.write_sweep(args.out, table, records)
    for (label, width), acc in sorted(table.items()):
        print(f"{label} width={width}: {acc:.4f}")
    print(f"sweep written to {args.out}/")
    return 0


def _cmd_enumerate(args):
    plans = matcher.enumerate_matchings(args.a, args.b,
                                        full_rank_only=args.full_rank_only)
    for plan in plans:
        print(plan.label)
    print(f"{len(plans)} plan(s) for depths ({args.a}, {args.b})")
    return 0


def _cmd_gradcheck(args):
    widths = [int(w) for w in args.widths.split(",")]
    err = sae.gradient_check(widths, n_samples=args.samples,
                             weight_decay=args.weight_decay, seed=args.seed)
    print(f"max relative gradient error: {err:.3e}")
    ok = err < args.tol
    print("PASS" if ok else "FAIL", f"(tolerance {args.tol:g})")
    return 0 if ok else 1


def _cmd_make_data(args):
    profile_path, pixel_path = synth.ensure_dataset(args.data_dir, seed=args.seed)
    print(f"pixel view:   {pixel_path}")
    print(f"profile view: {profile_path}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="layermatch",
        description="two-network transfer learning with searched layer coupling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full experiment over class pairs")
    _add_common(p_run)
    p_run.add_argument("--search", action="store_true",
                       help="re-run the structure search instead of the "
                            "pinned matched plans")
    p_run.set_defaults(fn=_cmd_run)

    p_search = sub.add_parser("search", help="rank candidate plans by objective")
    _add_common(p_search)
    p_search.set_defaults(fn=_cmd_search)

    p_sweep = sub.add_parser("sweep-neurons", help="top-layer width sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--widths", default="10,20,30,40,50",
                         help="comma list of top-layer widths")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_enum = sub.add_parser("enumerate", help="print candidate plans for (a, b)")
    p_enum.add_argument("a", type=int)
    p_enum.add_argument("b", type=int)
    p_enum.add_argument("--full-rank-only", action="store_true")
    p_enum.set_defaults(fn=_cmd_enumerate)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_grad.add_argument("--widths", default="5,3,2")
    p_grad.add_argument("--samples", type=int, default=8)
    p_grad.add_argument("--weight-decay", type=float, default=0.1)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tol", type=float, default=1e-4)
    p_grad.set_defaults(fn=_cmd_gradcheck)

    p_data = sub.add_parser("make-data", help="generate the cached two-view tables")
    p_data.add_argument("--data-dir", default="data")
    p_data.add_argument("--seed", type=int, default=0)
    p_data.set_defaults(fn=_cmd_make_data)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
