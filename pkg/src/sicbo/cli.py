"""Command line entry point.

Exit codes: 0 success, 1 invalid spec or failed validation, 2 a run blew up.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .dynamics import BlowUpError, ConfigError, Variant
from .harness.config import ExperimentSpec, SpecError, load_spec
from .harness.experiment import compare_variants, run_experiment, validate
from .harness.io import _jsonable
from .objective import OBJECTIVE_NAMES
from .weights import FlowKind

log = logging.getLogger("sicbo")

EXIT_OK, EXIT_INVALID, EXIT_BLOWUP = 0, 1, 2


def _apply_flags(spec: ExperimentSpec, args) -> ExperimentSpec:
    changes = {}
    if args.seed is not None:
        changes["config"] = spec.config.replace(seed=args.seed)
    if args.replicas is not None:
        changes["replicas"] = args.replicas
    if args.out is not None:
        changes["outputs_dir"] = args.out
    return spec.replace(**changes) if changes else spec


def _load(path, args) -> ExperimentSpec:
    return _apply_flags(load_spec(path), args)


def _print(obj) -> None:
    print(json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False))


def cmd_run(args) -> int:
    spec = _load(args.spec, args)
    manifest = run_experiment(spec, threads=args.threads)
    for p in manifest.points:
        s = p.summary
        log.info("point %d %s: %d/%d replicas ok, residual %s", p.index, p.overrides,
                 s.get("n_ok_replicas", 0), spec.replicas, s.get("fixed_point_residual"))
    print(manifest.out_dir)
    if manifest.aborted:
        for p in manifest.points:
            for a in p.aborts:
                log.error("point %d replica %s blew up at step %s", p.index, a["replica"], a["step"])
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = _load(args.spec_a, args), _load(args.spec_b, args)
    out = args.out or a.outputs_dir
    rep = compare_variants(a, b, threads=args.threads, out_dir=f"{out}/compare_{a.name}_{b.name}")
    _print(rep.as_dict())
    return EXIT_BLOWUP if rep.aborts else EXIT_OK


def cmd_validate(args) -> int:
    spec = _load(args.spec, args)
    worst = EXIT_OK
    reports = []
    for overrides, cfg in spec.points():
        rep = validate(cfg, spec.make_objective(), R=spec.radius(cfg), n_pairs=spec.lm_pairs)
        reports.append(dict(rep.as_dict(), overrides=overrides))
        for w in rep.warnings:
            log.warning("%s: %s", overrides or spec.name, w)
        if not rep.ok:
            worst = EXIT_INVALID
    _print(reports)
    return worst


def cmd_catalog(args) -> int:
    _print({
        "objectives": list(OBJECTIVE_NAMES),
        "variants": [v.value for v in Variant],
        "weight_flows": [k.value for k in FlowKind],
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sicbo", description="Self-interacting consensus-based optimization experiments")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--replicas", type=int, help="override the replica count")
    common.add_argument("--out", help="override the outputs directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replicas")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run an experiment spec")
    r.add_argument("spec")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", parents=[common], help="compare two variants")
    c.add_argument("spec_a")
    c.add_argument("spec_b")
    c.set_defaults(func=cmd_compare)
    v = sub.add_parser("validate", parents=[common], help="check a spec against the theory's regime")
    v.add_argument("spec")
    v.set_defaults(func=cmd_validate)
    k = sub.add_parser("catalog", parents=[common], help="list objectives, variants and weight flows")
    k.set_defaults(func=cmd_catalog)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (SpecError, ConfigError) as exc:
        log.error("invalid spec: %s", exc)
        return EXIT_INVALID
    except BlowUpError as exc:
        log.error("blow-up: %s", exc)
        return EXIT_BLOWUP
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
