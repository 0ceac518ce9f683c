"""Command-line front end: ``pimasim run | figures | tables``."""

import argparse
import logging
import math
import os
import sys

from . import harness
from .config import SimConfig
from .estimator import db_to_linear, practical_thresholds, required_samples
from .harness import CELL_FIELDS, cell_row, format_row
from .validation import ConfigError

log = logging.getLogger("pimasim")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

# config-file key -> (SimConfig field, parser); keys mirror the long flags
KEYS = {
    "protocol": ("protocol", str),
    "users": ("n_users", int),
    "lambda_total": ("lambda_total", float),
    "buffer": ("buffer", int),
    "slot_us": ("slot_duration", lambda v: float(v) * 1e-6),
    "bandwidth_hz": ("bandwidth", float),
    "noise_db": ("noise_power", lambda v: db_to_linear(float(v))),
    "pe_target": ("pe_target", float),
    "m1": ("m1", int),
    "seed": ("seed", int),
    "horizon_slots": ("horizon_slots", int),
    "warmup_slots": ("warmup_slots", int),
}
EXTRA_KEYS = {"out": str, "seeds": int, "jobs": int}

PE_GRID = (0.01, 0.05, 0.1, 0.2, 0.3)


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a raw dict of config-file keys."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError("config", f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if key not in KEYS and key not in EXTRA_KEYS:
            raise ConfigError(key, f"{source}:{lineno}: unknown key")
        if key in out:
            raise ConfigError(key, f"{source}:{lineno}: duplicate key")
        parse = KEYS[key][1] if key in KEYS else EXTRA_KEYS[key]
        try:
            out[key] = parse(value)
        except ValueError:
            raise ConfigError(key, f"{source}:{lineno}: cannot parse {value!r}") from None
    return out


def load_config_file(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), path)


def _invert(parse, target, guess, span=64):
    """Float near ``guess`` that ``parse`` maps exactly onto ``target``, if one exists."""
    lo = hi = guess
    for _ in range(span):
        for cand in (lo, hi):
            if parse(repr(cand)) == target:
                return cand
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
    return guess


def dump_config(config):
    """Inverse of ``parse_config_text`` for the SimConfig-backed keys."""
    lines = [
        f"protocol = {config.protocol}",
        f"users = {config.n_users}",
        f"lambda_total = {config.lambda_total!r}",
        f"buffer = {config.buffer}",
        f"slot_us = {_invert(KEYS['slot_us'][1], config.slot_duration, config.slot_duration * 1e6)!r}",
        f"bandwidth_hz = {config.bandwidth!r}",
        f"noise_db = {_invert(KEYS['noise_db'][1], config.noise_power, 10 * math.log10(config.noise_power))!r}",
        f"pe_target = {config.pe_target!r}",
    ]
    if config.m1 is not None:
        lines.append(f"m1 = {config.m1}")
    lines += [f"seed = {config.seed}", f"horizon_slots = {config.horizon_slots}",
              f"warmup_slots = {config.warmup_slots}"]
    return "\n".join(lines) + "\n"


def build_config(values):
    fields = {KEYS[k][0]: v for k, v in values.items() if k in KEYS}
    return SimConfig(**fields)


def _add_sim_flags(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--config", help="key = value file; flags override its entries")
    g.add_argument("--protocol", choices=("pima", "tdma", "saloha"))
    g.add_argument("--users", type=int)
    g.add_argument("--lambda-total", type=float)
    g.add_argument("--buffer", type=int)
    g.add_argument("--slot-us", type=float)
    g.add_argument("--bandwidth-hz", type=float)
    g.add_argument("--noise-db", type=float)
    size = g.add_mutually_exclusive_group()
    size.add_argument("--pe-target", type=float)
    size.add_argument("--m1", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--horizon-slots", type=int)
    g.add_argument("--warmup-slots", type=int)
    g.add_argument("--out")


def make_parser():
    parser = argparse.ArgumentParser(prog="pimasim", description="PIMA / TDMA / SALOHA MAC simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    _add_sim_flags(p)

    p = sub.add_parser("figures", help="drop and latency grids for the four reference curves")
    _add_sim_flags(p)
    p.add_argument("--seeds", type=int)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("tables", help="slot table, decision boundaries and PIA sizing")
    _add_sim_flags(p)
    return parser


def resolve(args):
    """Merge config file and flags; flags win."""
    values = load_config_file(args.config) if args.config else {}
    if args.m1 is not None:
        values.pop("pe_target", None)
    if args.pe_target is not None:
        values.pop("m1", None)
    for key, (_, parse) in KEYS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = parse(flag) if key in ("slot_us", "noise_db") else flag
    for key in EXTRA_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def cmd_run(values, stdout):
    config = build_config(values)
    log.info("resolved config: %s", config.resolved())
    metrics = harness.run(config)
    header = ",".join(CELL_FIELDS)
    row = format_row(cell_row(config, metrics))
    if values.get("out"):
        with open(values["out"], "w") as fh:
            fh.write(header + "\n" + row + "\n")
    print(header, file=stdout)
    print(row, file=stdout)
    print(metrics.summary(), file=stdout)


def cmd_figures(values, stdout):
    config = build_config(values)
    out_dir = values.get("out") or "."
    os.makedirs(out_dir, exist_ok=True)
    seeds = values.get("seeds", 10)
    jobs = values.get("jobs", 1)
    for label, overrides in harness.REFERENCE_CURVES:
        log.info("resolved config [%s]: %s", label, config.replace(**overrides).resolved())
    result = harness.sweep(config, harness.REFERENCE_GRID, range(config.seed, config.seed + seeds),
                           harness.REFERENCE_CURVES, n_jobs=jobs)
    for name, metric in (("fig2_drop.csv", "drop_prob"), ("fig3_latency.csv", "mean_latency_s")):
        path = os.path.join(out_dir, name)
        result.write_points(path, metric)
        print(f"wrote {path}", file=stdout)


def cmd_tables(values, stdout):
    config = build_config(values)
    log.info("resolved config: %s", config.resolved())
    K, noise = config.n_users, config.noise_power
    table = harness.cached_table(K)
    print("nu_hat,L2,efficiency", file=stdout)
    for nu in range(K + 1):
        print(f"{nu},{table[nu]},{float(table.efficiency[nu])!r}", file=stdout)
    print(file=stdout)
    print("b,boundary", file=stdout)
    for b, eps in enumerate(practical_thresholds(K, noise).boundaries):
        print(f"{b},{float(eps)!r}", file=stdout)
    print(file=stdout)
    print("pe_target,M1,L1_us", file=stdout)
    for pe in PE_GRID:
        m1 = required_samples(K, noise, pe)
        print(f"{pe},{m1},{m1 / config.bandwidth * 1e6!r}", file=stdout)


COMMANDS = {"run": cmd_run, "figures": cmd_figures, "tables": cmd_tables}


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        values = resolve(args)
        COMMANDS[args.command](values, stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
