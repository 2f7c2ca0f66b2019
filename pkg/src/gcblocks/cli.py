"""Command-line surface.

Subcommands::

    check-equivalence   factored vs literal simplified block, and the two
                        framework instantiations, on random instances
    gradcheck           analytic backward vs central finite differences
    cost-table          parameter/MAC table with published-figure checks
    att-stats           pairwise-distance analysis of a stored feature map
    forward             run one block over a stored feature map

Exit status: 0 all checks passed, 1 checks ran and failed, 2 usage, format
or dimension error.  Reports are printed as stable ``key: value`` text and
contain no timestamps, so identical invocations produce identical bytes.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from .backward import BACKWARD_KINDS, gradcheck_block
from .blocks import (
    BlockSpec,
    block_forward,
    framework_forward,
    gc_forward,
    init_params,
    random_params,
    se_forward,
    snl_factored_forward,
    snl_forward,
)
from .costs import (
    DEFAULT_CONFIG,
    PUBLISHED_TARGETS,
    check_target,
    emit_cost_table,
    parse_cost_config,
)
from .kernels import max_relative_error
from .reports import RunReport
from .stats import analyze_block
from .tensor_io import read_tensor, write_tensor
from .types import (
    DimensionError,
    FeatureMap,
    FormatError,
    InvariantError,
    LinearWeight,
    NumericError,
    SpecError,
)

EQUIVALENCE_TOL = 1e-10
GRADIENT_TOL = 1e-6

_CLI_KINDS = {
    "nl": "nl",
    "snl": "snl",
    "snl-factored": "snl_factored",
    "se": "se",
    "gc": "gc",
    "framework": "framework",
}


def _random_map(channels: int, positions: int, seed: int) -> FeatureMap:
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((channels, positions))
    return FeatureMap(data, height=positions, width=1)


def _spec_from_args(args, channels: int) -> BlockSpec:
    kind = _CLI_KINDS[args.block]
    return BlockSpec(
        kind=kind,
        channels=channels,
        variant=args.variant if kind == "nl" else None,
        ratio=args.ratio,
        pooling=args.pooling if kind == "framework" else None,
        fusion=args.fusion if kind == "framework" else None,
    )


def _positions_from_args(args, default: int) -> int:
    if args.h is not None or args.w is not None or args.t is not None:
        h = args.h if args.h is not None else 1
        w = args.w if args.w is not None else 1
        t = args.t if args.t is not None else 1
        return h * w * t
    if getattr(args, "n_positions", None) is not None:
        return args.n_positions
    return default


# ---------------------------------------------------------------------------
# check-equivalence


def cmd_check_equivalence(args) -> int:
    if args.c is not None:
        sizes = [(args.c, _positions_from_args(args, 9))]
    else:
        sizes = [(c, n) for c in (4, 16, 64) for n in (1, 9, 100)]

    snl_err = 0.0
    gc_err = 0.0
    se_err = 0.0
    bit_identical = True
    count = 0
    for idx, (c, n) in enumerate(sizes):
        for k in range(args.instances):
            seed = args.seed + 1000 * idx + k
            x = _random_map(c, n, seed + 7)
            count += 1

            spec = BlockSpec("snl", channels=c)
            p = random_params(spec, seed)
            p_fact = p
            if args.inject_error:
                bumped = p.value.data.copy()
                bumped[0, 0] += 1e-6
                p_fact = replace(p, value=LinearWeight(bumped))
            lhs = snl_forward(x, p).z.data
            rhs = snl_factored_forward(x, p_fact).z.data
            snl_err = max(snl_err, max_relative_error(lhs, rhs))

            gc_spec = BlockSpec("gc", channels=c, ratio=args.ratio)
            fw_add = BlockSpec("framework", channels=c, ratio=args.ratio,
                               pooling="att", fusion="add")
            gp = random_params(gc_spec, seed)
            z_gc = gc_forward(x, gp).z.data
            z_fw = framework_forward(x, fw_add, random_params(fw_add, seed)).z.data
            gc_err = max(gc_err, float(np.max(np.abs(z_gc - z_fw), initial=0.0)))
            bit_identical &= bool(np.array_equal(z_gc, z_fw))

            se_spec = BlockSpec("se", channels=c, ratio=args.ratio)
            fw_scale = BlockSpec("framework", channels=c, ratio=args.ratio,
                                 pooling="avg", fusion="scale")
            z_se = se_forward(x, random_params(se_spec, seed)).z.data
            z_fws = framework_forward(x, fw_scale, random_params(fw_scale, seed)).z.data
            se_err = max(se_err, float(np.max(np.abs(z_se - z_fws), initial=0.0)))
            bit_identical &= bool(np.array_equal(z_se, z_fws))

    report = RunReport(
        command="check-equivalence",
        seed=args.seed,
        spec={
            "sizes": ";".join(f"{c}x{n}" for c, n in sizes),
            "instances_per_size": args.instances,
            "instances_total": count,
            "ratio": args.ratio,
            "inject_error": args.inject_error,
        },
        tolerances={"factored_rel_err": EQUIVALENCE_TOL},
        results={
            "snl_factored_max_rel_err": snl_err,
            "gc_vs_framework_max_abs_err": gc_err,
            "se_vs_framework_max_abs_err": se_err,
        },
        checks={
            "snl_factorization": snl_err <= EQUIVALENCE_TOL,
            "framework_bit_identical": bit_identical,
        },
    )
    print(report.to_text(), end="")
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(args) -> int:
    kind = _CLI_KINDS[args.block]
    if kind not in BACKWARD_KINDS:
        raise SpecError(f"gradcheck supports kinds {BACKWARD_KINDS}, not {kind!r}")
    spec = _spec_from_args(args, args.c)
    p = random_params(spec, args.seed)
    x = _random_map(args.c, _positions_from_args(args, 12), args.seed + 1)
    upstream = _random_map(args.c, x.positions, args.seed + 2)

    rel_err, analytic, numeric = gradcheck_block(spec, x, p, upstream, h=args.step)
    checks = {"gradient_match": rel_err <= GRADIENT_TOL}
    results = {
        "max_rel_err": rel_err,
        "n_coordinates": analytic.size,
        "step": args.step,
    }
    if not np.all(np.isfinite(analytic)):
        checks["gradient_finite"] = False
        results["nonfinite_coordinate"] = int(np.flatnonzero(~np.isfinite(analytic))[0])
    elif not checks["gradient_match"]:
        worst = int(np.argmax(np.abs(analytic - numeric)))
        results["worst_coordinate"] = worst
        results["worst_analytic"] = float(analytic[worst])
        results["worst_numeric"] = float(numeric[worst])

    report = RunReport(
        command="gradcheck",
        seed=args.seed,
        spec={
            "block": args.block,
            "pooling": args.pooling or "",
            "fusion": args.fusion or "",
            "channels": args.c,
            "positions": x.positions,
            "ratio": args.ratio,
        },
        tolerances={"gradient_rel_err": GRADIENT_TOL},
        results=results,
        checks=checks,
    )
    print(report.to_text(), end="")
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# cost-table


def cmd_cost_table(args) -> int:
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise FormatError(f"cannot read config: {exc}") from exc
    else:
        text = DEFAULT_CONFIG
    entries = parse_cost_config(text)

    lines, reports = emit_cost_table((e.label, e.desc, e.plan) for e in entries)
    for line in lines:
        print(line)
    print()

    results: dict = {}
    checks: dict = {}
    for entry, report in zip(entries, reports):
        if entry.target is None:
            continue
        for target in PUBLISHED_TARGETS[entry.target]:
            ok, measured, allowed = check_target(target, report)
            name = f"{entry.label}.{target.kind}"
            results[name] = measured
            results[name + ".target"] = target.value
            results[name + ".allowed_dev"] = allowed
            checks[name] = ok

    report = RunReport(
        command="cost-table",
        spec={"rows": len(entries), "config": args.config or "<builtin>"},
        results=results,
        checks=checks,
    )
    print(report.to_text(), end="")
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# att-stats


def cmd_att_stats(args) -> int:
    fmap = read_tensor(args.tensor).astype(np.float64)
    spec = _spec_from_args(args, fmap.channels)
    params = random_params(spec, args.seed)
    reports = analyze_block(fmap, spec, params)

    results: dict = {f"{r.metric}_{r.family}": r.value for r in reports}
    if not any(r.metric == "jsd" for r in reports):
        results["jsd_att"] = "n/a (attention not probability-normalized)"
    notes = {r.family: r.note for r in reports if r.note}
    for family, note in notes.items():
        results[f"note_{family}"] = note

    report = RunReport(
        command="att-stats",
        seed=args.seed,
        spec={
            "tensor": args.tensor,
            "block": args.block,
            "variant": args.variant or "",
            "ratio": args.ratio,
            "channels": fmap.channels,
            "positions": fmap.positions,
        },
        results=results,
    )
    print(report.to_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# forward


def cmd_forward(args) -> int:
    fmap = read_tensor(args.tensor)
    if args.c is not None and args.c != fmap.channels:
        raise DimensionError(f"declared --c {args.c}, file has {fmap.channels} channels")
    if args.n_positions is not None and args.n_positions != fmap.positions:
        raise DimensionError(
            f"declared --np {args.n_positions}, file has {fmap.positions} positions"
        )
    for flag, declared, actual in (
        ("--h", args.h, fmap.height),
        ("--w", args.w, fmap.width),
        ("--t", args.t, fmap.frames),
    ):
        if declared is not None and declared != actual:
            raise DimensionError(f"declared {flag} {declared}, file has {actual}")
    dtype = np.float64 if args.precision == 64 else np.float32
    x = fmap.astype(dtype)
    spec = _spec_from_args(args, fmap.channels)
    builder = init_params if args.weights == "identity" else random_params
    params = builder(spec, args.seed).astype(dtype)
    out = block_forward(x, spec, params)
    write_tensor(args.out, out.z)

    report = RunReport(
        command="forward",
        seed=args.seed,
        spec={
            "tensor": args.tensor,
            "block": args.block,
            "variant": args.variant or "",
            "ratio": args.ratio,
            "pooling": args.pooling or "",
            "fusion": args.fusion or "",
            "weights": args.weights,
            "precision": args.precision,
        },
        results={
            "out": args.out,
            "channels": out.z.channels,
            "positions": out.z.positions,
        },
    )
    print(report.to_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_spec_flags(sub, kinds=tuple(_CLI_KINDS)):
    sub.add_argument("--block", required=True, choices=kinds)
    sub.add_argument("--variant", choices=("gaussian", "e_gaussian", "dot", "concat"))
    sub.add_argument("--ratio", type=int, default=16)
    sub.add_argument("--pooling", choices=("avg", "att"))
    sub.add_argument("--fusion", choices=("add", "scale"))


def _add_size_flags(sub, default_c=None):
    sub.add_argument("--c", type=int, default=default_c)
    sub.add_argument("--np", dest="n_positions", type=int, default=None)
    sub.add_argument("--h", type=int, default=None)
    sub.add_argument("--w", type=int, default=None)
    sub.add_argument("--t", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcblocks",
        description="Global-context block family with built-in verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    eq = sub.add_parser("check-equivalence", help="factored/unfactored and framework oracles")
    eq.add_argument("--seed", type=int, default=0)
    _add_size_flags(eq)
    eq.add_argument("--instances", type=int, default=12, help="instances per size")
    eq.add_argument("--ratio", type=int, default=4)
    eq.add_argument("--inject-error", action="store_true",
                    help="test hook: perturb one weight copy (negative control)")
    eq.set_defaults(func=cmd_check_equivalence)

    gc = sub.add_parser("gradcheck", help="analytic backward vs finite differences")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--block", required=True,
                    choices=("snl-factored", "se", "gc", "framework"))
    gc.add_argument("--pooling", choices=("avg", "att"))
    gc.add_argument("--fusion", choices=("add", "scale"))
    gc.add_argument("--ratio", type=int, default=4)
    _add_size_flags(gc, default_c=8)
    gc.add_argument("--step", type=float, default=1e-5)
    gc.set_defaults(func=cmd_gradcheck, variant=None)

    ct = sub.add_parser("cost-table", help="parameter/MAC table vs published figures")
    ct.add_argument("--config", default=None, help="INI table config (default: builtin)")
    ct.set_defaults(func=cmd_cost_table)

    at = sub.add_parser("att-stats", help="pairwise-distance analysis")
    at.add_argument("tensor")
    at.add_argument("--seed", type=int, default=0)
    _add_spec_flags(at)
    at.set_defaults(func=cmd_att_stats)

    fw = sub.add_parser("forward", help="run one block over a stored map")
    fw.add_argument("tensor")
    fw.add_argument("--out", required=True)
    fw.add_argument("--seed", type=int, default=0)
    _add_spec_flags(fw)
    fw.add_argument("--weights", choices=("identity", "random"), default="identity")
    fw.add_argument("--precision", type=int, choices=(32, 64), default=64)
    _add_size_flags(fw)
    fw.set_defaults(func=cmd_forward)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, SpecError, DimensionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
