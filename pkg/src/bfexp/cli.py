"""Batch evaluation harness.

Subcommands: sweep-exp, softmax-eval, attention-eval, cost-report, codec.
Every report embeds its fully resolved config (including the RNG seed),
uses a counter-based generator, and is byte-identical across reruns. A
JSON config file given with --config overrides command-line flags; the
BFEXP_OUTPUT_DIR environment variable supplies the output directory when
--out is not passed.

Exit codes: 0 all embedded checks passed, 1 at least one check failed,
2 configuration/usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bf16, matio
from .cost import (
    BUILTIN_SCHEDULES,
    CostReport,
    attention_cost,
    cost_of_schedule,
    load_schedule,
    speedup,
)
from .expunit import DEFAULT, ExpUnitParams, exp_ref_fixed, exp_table
from .isa import ExpInstruction, ExpOp, NotAnExpInstruction, decode, encode
from .kernels import (
    AccumPolicy,
    AttentionConfig,
    attention_reference,
    flash_attention_2,
    softmax_optimized,
    softmax_reference,
)

GOLDEN_NAME = "exp_golden_vectors.txt"


class ConfigError(Exception):
    pass


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.Philox(seed))


def _ulps(values: np.ndarray) -> np.ndarray:
    """Vectorized BF16 spacing at each magnitude (min-normal floor)."""
    av = np.abs(np.asarray(values, dtype=np.float64))
    _, e = np.frexp(av)
    e = np.maximum(e - 1, -126)
    return np.ldexp(1.0, e - 7)


def _pyify(obj):
    if isinstance(obj, dict):
        return {str(k): _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(_pyify(obj), f, indent=2, sort_keys=True)
        f.write("\n")


def _out_dir(args) -> str:
    out = args.out or os.environ.get("BFEXP_OUTPUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _apply_config_file(args, allowed: dict) -> dict:
    """Resolve the run config: flag values, then config-file overrides."""
    cfg = {k: getattr(args, k.replace("-", "_")) for k in allowed}
    if args.config:
        try:
            with open(args.config) as f:
                overrides = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"config file: {e}") from e
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in overrides.items():
            if key not in allowed:
                raise ConfigError(f"config file: unknown key {key!r}")
            if not isinstance(value, allowed[key]):
                raise ConfigError(f"config file: {key} has wrong type")
            cfg[key] = value
    return cfg


def _params_from_cfg(cfg) -> ExpUnitParams:
    try:
        return ExpUnitParams(
            round_mode=cfg["round_mode"],
            p_round_mode=cfg["p_round_mode"],
            log2e_frac_bits=cfg["log2e_frac_bits"],
            correction_enabled=not cfg["no_correction"],
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _finish(report, checks, path, label) -> int:
    report["checks"] = {k: bool(v) for k, v in checks.items()}
    report["all_passed"] = all(checks.values())
    _write_json(path, report)
    for name, ok in sorted(checks.items()):
        print(f"{label}: {'PASS' if ok else 'FAIL'} {name}")
    print(f"{label}: report {path}")
    return 0 if report["all_passed"] else 1


# ---------------------------------------------------------------------------
# sweep-exp


def _error_stats(table: np.ndarray):
    pats = bf16.all_patterns()
    e = (pats >> 7) & 0xFF
    finite = e != 0xFF
    sat_pos = int(np.count_nonzero(finite & (table == bf16.POS_INF)))
    sat_zero = int(np.count_nonzero(finite & (table == 0x0000)))
    keep = finite & (table != bf16.POS_INF) & (table != 0x0000)
    x = bf16.to_float(bf16.ftz(pats[keep]))
    true = np.exp(x)
    rel = np.abs(bf16.to_float(table[keep]) - true) / true
    worst = pats[keep][int(rel.argmax())]
    return {
        "domain_size": int(keep.sum()),
        "saturated_to_inf": sat_pos,
        "saturated_to_zero": sat_zero,
        "nan_inputs": int(np.count_nonzero((e == 0xFF) & ((pats & 0x7F) != 0))),
        "mean_rel_err": float(rel.mean()),
        "max_rel_err": float(rel.max()),
        "worst_input_pattern": f"{int(worst):04X}",
    }, keep, rel


def cmd_sweep_exp(args) -> int:
    allowed = {"round_mode": str, "p_round_mode": str, "log2e_frac_bits": int,
               "no_correction": bool, "golden_name": str}
    cfg = _apply_config_file(args, allowed)
    params = _params_from_cfg(cfg)
    out = _out_dir(args)

    table = exp_table(params)
    mismatches = sum(int(table[x]) != exp_ref_fixed(x, params)
                     for x in range(1 << 16))
    stats, keep, rel = _error_stats(table)
    plain_stats, _, _ = _error_stats(exp_table(
        ExpUnitParams(round_mode=params.round_mode,
                      p_round_mode=params.p_round_mode,
                      log2e_frac_bits=params.log2e_frac_bits,
                      correction_enabled=False)))

    golden_path = os.path.join(out, cfg["golden_name"])
    pats = bf16.all_patterns()
    matio.write_golden_vectors(golden_path, pats, table)

    csv_path = os.path.join(out, "sweep_exp_buckets.csv")
    with open(csv_path, "w") as f:
        f.write("sign,biased_exponent,count,mean_rel_err,max_rel_err\n")
        kp = pats[keep]
        for sign in (0, 1):
            for be in range(0, 255):
                mask = ((kp >> 15) == sign) & (((kp >> 7) & 0xFF) == be)
                if not mask.any():
                    continue
                r = rel[mask]
                f.write(f"{sign},{be},{int(mask.sum())},"
                        f"{float(r.mean()):.9f},{float(r.max()):.9f}\n")

    checks = {
        "reference_mismatches_zero": mismatches == 0,
        "mean_rel_err_within_0.16_percent": stats["mean_rel_err"] <= 0.0016,
        "max_rel_err_within_0.85_percent": stats["max_rel_err"] <= 0.0085,
        "correction_beats_plain_schraudolph":
            stats["max_rel_err"] < plain_stats["max_rel_err"]
            and stats["mean_rel_err"] < plain_stats["mean_rel_err"],
    }
    report = {
        "command": "sweep-exp",
        "config": cfg,
        "reference_mismatches": mismatches,
        "stats": stats,
        "stats_without_correction": plain_stats,
        "files": {"golden": cfg["golden_name"], "buckets_csv": "sweep_exp_buckets.csv"},
    }
    return _finish(report, checks, os.path.join(out, "sweep_exp_report.json"),
                   "sweep-exp")


# ---------------------------------------------------------------------------
# softmax-eval


def _logits(rng, distribution, rows, row_len):
    if distribution == "normal":
        return rng.normal(size=(rows, row_len))
    if distribution == "uniform":
        return rng.uniform(-3.0, 3.0, size=(rows, row_len))
    if distribution == "constant":
        return np.repeat(rng.normal(size=(rows, 1)), row_len, axis=1)
    raise ConfigError(f"unknown distribution {distribution!r}")


_DEV_BINS = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


def _dev_histogram(devs: np.ndarray) -> dict:
    hist, lo = {}, 0.0
    for hi in _DEV_BINS:
        hist[f"[{lo:g},{hi:g})"] = int(np.count_nonzero((devs >= lo) & (devs < hi)))
        lo = hi
    hist[f"[{lo:g},inf)"] = int(np.count_nonzero(devs >= lo))
    return hist


def cmd_softmax_eval(args) -> int:
    allowed = {"rows": int, "row_len": int, "seed": int, "distribution": str}
    cfg = _apply_config_file(args, allowed)
    if cfg["rows"] < 1 or cfg["row_len"] < 1:
        raise ConfigError("rows and row-len must be positive")
    if cfg["distribution"] not in ("normal", "uniform", "constant"):
        raise ConfigError(f"unknown distribution {cfg['distribution']!r}")
    out = _out_dir(args)

    x = bf16.from_float(_logits(_rng(cfg["seed"]), cfg["distribution"],
                                cfg["rows"], cfg["row_len"]))
    xf = bf16.to_float(bf16.ftz(x))
    ref = softmax_reference(xf)
    am = xf.argmax(axis=1)
    gap = np.partition(xf, -2, axis=1)
    unique = gap[:, -1] - gap[:, -2] >= _ulps(gap[:, -1]) if cfg["row_len"] > 1 \
        else np.ones(cfg["rows"], dtype=bool)

    modes, mse = {}, {}
    for acc in (AccumPolicy.FAITHFUL, AccumPolicy.WIDE):
        yf = bf16.to_float(softmax_optimized(x, DEFAULT, acc))
        rows_idx = np.arange(cfg["rows"])
        attains = yf[rows_idx, am] == yf.max(axis=1)
        others = yf.copy()
        others[rows_idx, am] = -np.inf
        strict = yf[rows_idx, am] > others.max(axis=1)
        devs = np.abs(yf.sum(axis=1) - 1.0)
        mse[acc] = float(np.mean((yf - ref) ** 2))
        modes[acc.value] = {
            "mse": mse[acc],
            "max_abs_err": float(np.abs(yf - ref).max()),
            "sum_dev_max": float(devs.max()),
            "sum_dev_histogram": _dev_histogram(devs),
            "argmax_attains_max_rate": float(attains.mean()),
            "argmax_strict_rate_unique_rows":
                float(strict[unique].mean()) if unique.any() else 1.0,
        }

    bound = cfg["row_len"] * 2.0 ** -7
    # 1e-8 is the bound at the reference row length 512; the BF16
    # quantization floor scales as (1/row_len)^2, so the bound does too
    mse_bound = 1e-8 * (512.0 / cfg["row_len"]) ** 2
    checks = {
        "wide_mse_within_bound": mse[AccumPolicy.WIDE] <= mse_bound,
        "wide_mse_not_above_faithful": mse[AccumPolicy.WIDE] <= mse[AccumPolicy.FAITHFUL],
        "argmax_attains_max_everywhere": all(
            m["argmax_attains_max_rate"] == 1.0 for m in modes.values()),
        "sum_dev_within_bound": all(
            m["sum_dev_max"] <= bound for m in modes.values()),
    }
    report = {
        "command": "softmax-eval",
        "config": cfg,
        "mse_bound": mse_bound,
        "rows_with_unique_max": int(unique.sum()),
        "modes": modes,
    }
    return _finish(report, checks, os.path.join(out, "softmax_eval_report.json"),
                   "softmax-eval")


# ---------------------------------------------------------------------------
# attention-eval


def cmd_attention_eval(args) -> int:
    allowed = {"seq_len": int, "head_dim": int, "tiles": str, "seed": int,
               "acc": str}
    cfg = _apply_config_file(args, allowed)
    if cfg["seq_len"] < 1 or cfg["head_dim"] < 1:
        raise ConfigError("seq-len and head-dim must be positive")
    if cfg["acc"] not in ("faithful", "wide"):
        raise ConfigError("acc must be 'faithful' or 'wide'")
    try:
        tiles = sorted({int(t) for t in cfg["tiles"].split(",")})
    except ValueError as e:
        raise ConfigError(f"bad tile list {cfg['tiles']!r}") from e
    if not tiles or any(t < 1 for t in tiles):
        raise ConfigError("tiles must be positive integers")
    out = _out_dir(args)
    acc = AccumPolicy(cfg["acc"])
    L, d = cfg["seq_len"], cfg["head_dim"]

    rng = _rng(cfg["seed"])
    Q = bf16.from_float(rng.normal(size=(L, d)))
    K = bf16.from_float(rng.normal(size=(L, d)))
    V = bf16.from_float(rng.normal(size=(L, d)))
    outs = {t: flash_attention_2(Q, K, V,
                                 AttentionConfig.for_head(L, L, d, tile_kv=t),
                                 DEFAULT, acc) for t in tiles}
    base = bf16.to_float(outs[tiles[0]])
    row_ulp = _ulps(np.abs(base).max(axis=1))
    tiling_ulps = 0.0
    for t in tiles[1:]:
        diff = np.abs(base - bf16.to_float(outs[t])).max(axis=1)
        tiling_ulps = max(tiling_ulps, float((diff / row_ulp).max()))

    ref = attention_reference(Q, K, V, 1.0 / math.sqrt(d))
    rel = float(np.linalg.norm(base - ref) / np.linalg.norm(ref))

    # degenerate single-key case must pass V through exactly
    cfg1 = AttentionConfig.for_head(L, 1, d)
    o1 = flash_attention_2(Q, K[:1], V[:1], cfg1, DEFAULT, acc)
    single_exact = bool(np.all(o1 == V[:1]))

    costs = {}
    for optimized in (False, True):
        rep, share = attention_cost(1024, 1024, 64, tile_kv=64,
                                    optimized=optimized)
        costs[rep.schedule] = {"report": rep.to_dict(), "softmax_share": share}
    share_opt = costs["fa-optimized"]["softmax_share"]

    checks = {
        "tiling_within_4_ulps": tiling_ulps <= 4.0,
        "oracle_rel_err_within_2_percent": rel <= 0.02,
        "single_key_exact": single_exact,
        "gpt2_softmax_share_below_10_percent": share_opt < 0.10,
    }
    report = {
        "command": "attention-eval",
        "config": cfg,
        "tiling_max_ulp_diff": tiling_ulps,
        "oracle_rel_err": rel,
        "modeled_cost_gpt2_head": costs,
    }
    return _finish(report, checks, os.path.join(out, "attention_eval_report.json"),
                   "attention-eval")


# ---------------------------------------------------------------------------
# cost-report


def _human_cost(report: CostReport) -> str:
    lines = [f"schedule {report.schedule}: outputs={report.outputs} "
             f"rows={report.rows}",
             f"  instructions {report.total_instructions} "
             f"({report.instructions_per_output:g}/output)",
             f"  cycles       {report.total_cycles} "
             f"({report.cycles_per_output:g}/output)"]
    for name, tag, instr, cyc in report.breakdown:
        label = f"{name} [{tag}]" if tag else name
        lines.append(f"    {label:<24} {instr:>10} instr {cyc:>10} cycles")
    return "\n".join(lines)


def cmd_cost_report(args) -> int:
    allowed = {"outputs": int, "rows": int, "fmt": str}
    cfg = _apply_config_file(args, allowed)
    if cfg["outputs"] < 1 or cfg["rows"] < 1:
        raise ConfigError("outputs and rows must be positive")
    if cfg["fmt"] not in ("text", "json", "csv"):
        raise ConfigError("format must be text, json or csv")
    out = _out_dir(args)

    if args.schedule_file:
        try:
            schedules = [load_schedule(args.schedule_file)]
        except (OSError, ValueError, KeyError) as e:
            raise ConfigError(f"schedule file: {e}") from e
    elif args.schedule:
        if args.schedule not in BUILTIN_SCHEDULES:
            raise ConfigError(
                f"unknown schedule {args.schedule!r}; "
                f"builtins: {', '.join(sorted(BUILTIN_SCHEDULES))}")
        schedules = [BUILTIN_SCHEDULES[args.schedule]()]
    else:
        schedules = [BUILTIN_SCHEDULES[n]() for n in
                     ("baseline", "sw-opt", "sw-exp-sw", "sw-exp-hw",
                      "vfexp-micro")]

    reports = [cost_of_schedule(s, cfg["outputs"], cfg["rows"])
               for s in schedules]
    by_name = {r.schedule: r for r in reports}

    if cfg["fmt"] == "json":
        print(json.dumps([_pyify(r.to_dict()) for r in reports],
                         indent=2, sort_keys=True))
    elif cfg["fmt"] == "csv":
        sys.stdout.write(CostReport.csv_header())
        for r in reports:
            sys.stdout.write(r.to_csv_row())
    else:
        for r in reports:
            print(_human_cost(r))
            if "baseline" in by_name and r.schedule != "baseline":
                print(f"  speedup vs baseline: "
                      f"{speedup(by_name['baseline'], r):.1f}x")

    _write_json(os.path.join(out, "cost_report.json"), {
        "command": "cost-report",
        "config": cfg,
        "reports": [r.to_dict() for r in reports],
    })
    with open(os.path.join(out, "cost_report.csv"), "w") as f:
        f.write(CostReport.csv_header())
        for r in reports:
            f.write(r.to_csv_row())

    full_set = {"baseline", "sw-exp-hw", "vfexp-micro"} <= set(by_name)
    if not full_set:
        return 0        # custom schedule: nothing calibrated to check
    base, opt = by_name["baseline"], by_name["sw-exp-hw"]
    checks = {
        "baseline_360_cycles_per_output": base.cycles_per_output == 360.0,
        "baseline_56_instructions_per_output": base.instructions_per_output == 56.0,
        "optimized_cycles_within_20_percent":
            abs(opt.cycles_per_output - 2.125) <= 0.2 * 2.125,
        "optimized_instructions_within_20_percent":
            abs(opt.instructions_per_output - 1.5) <= 0.2 * 1.5,
        "vfexp_half_cycle_per_output":
            by_name["vfexp-micro"].cycles_per_output == 0.5,
        "speedup_in_150_175_band": 150 <= speedup(base, opt) <= 175,
    }
    for name, ok in sorted(checks.items()):
        print(f"cost-report: {'PASS' if ok else 'FAIL'} {name}")
    return 0 if all(checks.values()) else 1


# ---------------------------------------------------------------------------
# codec


def cmd_codec(args) -> int:
    if args.codec_action == "encode":
        try:
            op = ExpOp[args.mnemonic.upper()]
        except KeyError:
            raise ConfigError(f"unknown mnemonic {args.mnemonic!r}; "
                              "use fexp or vfexp") from None
        try:
            word = encode(ExpInstruction(op, rd=args.rd, rs1=args.rs1))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        print(f"{word:08X}")
        return 0
    try:
        word = int(args.word, 16)
    except ValueError:
        raise ConfigError(f"not a hex word: {args.word!r}") from None
    try:
        instr = decode(word)
    except NotAnExpInstruction as e:
        print(f"codec: {e}", file=sys.stderr)
        return 1
    print(f"{instr.mnemonic} rd={instr.rd} rs1={instr.rs1}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="bfexp",
        description="BF16 exponential unit, softmax/attention kernels and "
                    "cost-model evaluation harness")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None,
                       help="output directory (default: $BFEXP_OUTPUT_DIR or .)")
        p.add_argument("--config", default=None,
                       help="JSON config file; its values override flags")

    p = sub.add_parser("sweep-exp",
                       help="exhaustive 65,536-input exponential sweep")
    common(p)
    p.add_argument("--round-mode", default=DEFAULT.round_mode,
                   choices=("truncate", "half-up"))
    p.add_argument("--p-round-mode", default=DEFAULT.p_round_mode,
                   choices=("truncate", "half-up"))
    p.add_argument("--log2e-frac-bits", type=int,
                   default=DEFAULT.log2e_frac_bits)
    p.add_argument("--no-correction", action="store_true",
                   help="disable the quadratic mantissa correction")
    p.add_argument("--golden-name", default=GOLDEN_NAME)
    p.set_defaults(func=cmd_sweep_exp)

    p = sub.add_parser("softmax-eval", help="softmax accuracy evaluation")
    common(p)
    p.add_argument("--rows", type=int, default=10000)
    p.add_argument("--row-len", type=int, default=512)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--distribution", default="normal")
    p.set_defaults(func=cmd_softmax_eval)

    p = sub.add_parser("attention-eval",
                       help="tiled attention accuracy and modeled cost")
    common(p)
    p.add_argument("--seq-len", type=int, default=32)
    p.add_argument("--head-dim", type=int, default=8)
    p.add_argument("--tiles", default="8,16,32",
                   help="comma-separated KV tile sizes")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--acc", default="wide", choices=("faithful", "wide"))
    p.set_defaults(func=cmd_attention_eval)

    p = sub.add_parser("cost-report", help="instruction/cycle cost reports")
    common(p)
    p.add_argument("--schedule", default=None,
                   help="one builtin schedule (default: all)")
    p.add_argument("--schedule-file", default=None,
                   help="INI schedule description")
    p.add_argument("--outputs", type=int, default=64)
    p.add_argument("--rows", type=int, default=1)
    p.add_argument("--fmt", default="text", choices=("text", "json", "csv"))
    p.set_defaults(func=cmd_cost_report)

    p = sub.add_parser("codec", help="encode/decode FEXP and VFEXP words")
    csub = p.add_subparsers(dest="codec_action", required=True)
    pe = csub.add_parser("encode")
    pe.add_argument("mnemonic", help="fexp or vfexp")
    pe.add_argument("rd", type=int)
    pe.add_argument("rs1", type=int)
    pd = csub.add_parser("decode")
    pd.add_argument("word", help="hex instruction word")
    p.set_defaults(func=cmd_codec)

    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"bfexp: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
