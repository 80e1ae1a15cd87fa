"""Command-line entry points for the experiment runners.

Every subcommand exits with code 0 iff the experiment's asserted
properties pass.  Outputs land in the --out directory (or the config's
``output`` entry): one CSV per experiment, a JSON summary, and a
plot-ready long-format CSV.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import harness
from .grid import write_csv, write_wdl1
from .solver import report_to_json


def _add_common(sub):
    sub.add_argument("--config", help="path to a JSON experiment config")
    sub.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    sub.add_argument("--out", help="output directory (overrides the config's)")
    sub.add_argument("--threads", type=int, default=1, help="worker threads for independent rows")


def _load_config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.from_json(args.config)
    else:
        cfg = harness.default_config()
    if args.out:
        cfg = dataclasses.replace(cfg, output=args.out)
    return cfg


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="wdlab",
        description="experiments on widely degenerate/singular diffusion at desk scale",
    )
    sp = ap.add_subparsers(dest="command", required=True)

    p_lem = sp.add_parser("lemmas", help="run the seeded algebraic inequality suite")
    _add_common(p_lem)
    p_lem.add_argument("--samples", type=int, default=100000)
    p_lem.add_argument("--full", action="store_true", help="include the calibrated-constant checks")

    for name, desc in (
        ("solve", "single Dirichlet solve at the largest configured eps"),
        ("sweep-eps", "uniform energy estimate sweep"),
        ("compare", "comparison estimate decay fit"),
        ("sobolev", "uniform Sobolev estimate stability"),
        ("integrability", "higher integrability across refinements"),
        ("manufactured", "manufactured-solution convergence study"),
    ):
        _add_common(sp.add_parser(name, help=desc))

    args = ap.parse_args(argv)

    if args.command == "lemmas":
        lemmas = harness.ALL_LEMMAS if args.full else harness.ACCEPTANCE_LEMMAS
        rep = harness.run_lemma_suite(args.seed, args.samples, lemmas=lemmas, outdir=args.out)
        bad = sum(r.violations for r in rep.rows)
        print(f"lemmas: {len(rep.rows)} cells, {bad} violations -> {'PASS' if rep.passed else 'FAIL'}")
        return 0 if rep.passed else 1

    cfg = _load_config(args)

    if args.command == "solve":
        import os

        from .grid import mollify
        from .solver import solve

        eps = cfg.eps_list[0]
        f = harness.datum_field(cfg)
        f_eps = mollify(f, max(eps, 2.0 * cfg.grid.spacing)) if eps > 0 else f
        rep = solve(harness.boundary_field(cfg), f_eps, cfg.params(eps), cfg.solver)
        print(
            f"solve eps={eps:g}: converged={rep.converged} iterations={rep.iterations} "
            f"residual={rep.final_residual:.3e} energy={rep.energy:.6g}"
        )
        if cfg.output:
            os.makedirs(cfg.output, exist_ok=True)
            write_csv(rep.solution, os.path.join(cfg.output, "solution.csv"))
            write_wdl1(rep.solution, os.path.join(cfg.output, "solution.wdl1"))
            with open(os.path.join(cfg.output, "solve_report.json"), "w") as fh:
                fh.write(report_to_json(rep) + "\n")
        return 0 if rep.converged else 1

    runners = {
        "sweep-eps": harness.run_energy_sweep,
        "compare": harness.run_comparison,
        "sobolev": harness.run_sobolev_estimate,
    }
    if args.command in runners:
        rep = runners[args.command](cfg)
    elif args.command == "integrability":
        rep = harness.run_higher_integrability(cfg, threads=args.threads)
    elif args.command == "manufactured":
        rep = harness.run_manufactured(cfg, threads=args.threads)
    else:  # pragma: no cover
        ap.error(f"unknown command {args.command}")
        return 2

    fitted = ", ".join(f"{k}={v:.4g}" for k, v in sorted(rep.fitted.items()))
    print(f"{rep.experiment}: {len(rep.rows)} rows; {fitted} -> {'PASS' if rep.passed else 'FAIL'}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
