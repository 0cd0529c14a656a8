"""Command-line experiment runner.

Every subcommand writes its data file(s) plus ``<out>.manifest.json``
recording the parameters, seed and argv, so ``epichaos replay`` can
regenerate the outputs bit for bit.  Options may also come from a flat
``key=value`` file given by ``--config``; explicit flags win.

Exit codes: 0 success, 1 usage error, 2 numerical or certification
failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time

import numpy as np

from . import __version__, dynsys, lattice, sim, tree
from .errors import EpichaosError, NumericalError

log = logging.getLogger("epichaos")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

# thresholds above which --long is required
LONG_CERT_POINTS = 200_000
LONG_TABLE_WORK = 2 * 10**9  # site-visits: sites * samples * grid points

SCHEMAS = """\
CSV outputs (comma-separated, header row, '.' decimal):
  orbit        k,value
  bifurcate    beta,value
  liyorke      beta,a0,a1,c,h1,h2,h3,witness,phi1,phi2,phi_holds
  theta-table  p,theta_hat,std_err,n_samples    (+ <out>.json metadata)
  sim          k,rho[,rho_half]                 (+ <out>.json config)
  sim scatter  k,rho_k,rho_next
JSON outputs:
  certify      beta_lo,beta_hi,grid_step,lipschitz_bound,min_infimum,margin,
               [certified],grid:[{beta,infimum,argmin}]
Grids:
  snapshot     PGM P2 (0/1) or RLE text ('w h' header, value:run tokens)
Each output has a <out>.manifest.json sidecar.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- config files ---------------------------------------------------------

def read_config(path):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _apply_config(parser, sub, argv):
    """Re-parse with config-file values installed as defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = read_config(args.config)
    actions = {a.dest: a for a in sub[args.command]._actions}
    defaults = {}
    for key, raw in values.items():
        if key in ("config", "command") or key not in actions:
            raise UsageError(f"config key {key!r} is not an option of {args.command}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = act.type(raw) if act.type else raw
    sub[args.command].set_defaults(**defaults)
    return parser.parse_args(argv)


# -- helpers --------------------------------------------------------------

def _positive(typ):
    def conv(s):
        v = typ(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return conv


def _unit(s):
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {s}")
    return v


def _progress(label):
    def report(done, total):
        print(f"{label}: {done}/{total}", file=sys.stderr, flush=True)
    return report


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def _lattice_map(args, beta):
    if args.table:
        table = lattice.ThetaTable.read(args.table)
    else:
        table = lattice.cached_theta_table(args.cache_dir, args.dim, args.box_side,
                                           n_samples=args.n_samples, seed=args.table_seed)
    p_c = args.p_c if args.p_c is not None else lattice.default_p_c(table.dimension)
    return lattice.LatticeMap(beta, table, p_c)


def _family(args):
    if args.map == "tree":
        return tree.TreeMap
    return lambda beta: _lattice_map(args, beta)


# -- subcommands ----------------------------------------------------------

def cmd_orbit(args):
    h = _family(args)(args.beta)
    vals = dynsys.orbit(h, args.p0, args.k_max)
    _write_rows(args.out, ["k", "value"], [[k, _fmt(v)] for k, v in enumerate(vals)])
    return [args.out], EXIT_OK


def cmd_bifurcate(args):
    if args.beta_max < args.beta_min or args.n_betas < 1:
        raise UsageError("need beta_max >= beta_min and n_betas >= 1")
    grid = np.linspace(args.beta_min, args.beta_max, args.n_betas)
    scan = dynsys.bifurcation_scan(_family(args), grid, args.p0, args.burn_in, args.keep)
    _write_rows(args.out, ["beta", "value"], [[_fmt(b), _fmt(v)] for b, v in scan])
    return [args.out], EXIT_OK


def cmd_certify(args):
    lo = args.beta_lo if args.beta_lo is not None else tree.BETA_C + args.step
    hi = args.beta_hi
    n_points = int((hi - lo) / args.step) + 1
    if n_points > LONG_CERT_POINTS and not args.long:
        raise UsageError(f"{n_points} grid points is a long job; pass --long")
    scan = hi > tree.BETA_CERT_MAX
    progress = _progress("certify") if args.long else None
    rep = tree.certify_expansion(lo, hi, args.step, scan=scan, progress=progress)
    with open(args.out, "w") as fh:
        # full-resolution grids are written compactly
        fh.write(rep.to_json(indent=1 if rep.betas.size <= 10_000 else None) + "\n")
    code = EXIT_OK
    if not scan and rep.min_infimum <= 1.0:
        code = EXIT_NUMERIC
    if args.long and rep.certified is False:
        code = EXIT_NUMERIC
    print(f"min infimum {rep.min_infimum:.6f}, margin {rep.margin:.6f}, "
          f"certified {rep.certified}", file=sys.stderr)
    return [args.out], code


def cmd_liyorke(args):
    if args.beta_lo <= tree.BETA_C or args.beta_hi < args.beta_lo:
        raise UsageError("need 2 log 2 < beta_lo <= beta_hi")
    rows, ok = [], True
    for beta in np.linspace(args.beta_lo, args.beta_hi, args.n_betas):
        lm = tree.landmarks(beta)
        w = tree.check_li_yorke_witness(beta)
        phi = tree.verify_phi_inequality(beta)
        ok &= w.holds and phi.holds
        rows.append([_fmt(beta), _fmt(lm.a0), _fmt(lm.a1), _fmt(lm.c), _fmt(w.h1), _fmt(w.h2),
                     _fmt(w.h3), int(w.holds), _fmt(phi.phi1), _fmt(phi.phi2), int(phi.holds)])
    _write_rows(args.out, ["beta", "a0", "a1", "c", "h1", "h2", "h3", "witness",
                           "phi1", "phi2", "phi_holds"], rows)
    return [args.out], EXIT_OK if ok else EXIT_NUMERIC


def _parse_grid(spec, p_c):
    if spec == "default":
        return lattice.default_grid(p_c)
    if ":" in spec:
        lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    return np.array(sorted(float(s) for s in spec.split(",")))


def cmd_theta_table(args):
    p_c = args.p_c if args.p_c is not None else lattice.default_p_c(args.dim)
    try:
        grid = _parse_grid(args.grid, p_c)
    except ValueError as exc:
        raise UsageError(f"bad grid spec {args.grid!r}: {exc}") from None
    work = args.box_side**args.dim * args.n_samples * grid.size
    if work > LONG_TABLE_WORK and not args.long:
        raise UsageError("this table is a long job; pass --long")
    progress = _progress("theta-table") if args.long else None
    table = lattice.build_theta_table(args.dim, args.box_side, grid, args.n_samples,
                                      args.criterion, args.seed, p_c, progress)
    table.write(args.out)
    return [args.out, args.out + ".json"], EXIT_OK


_SIM_KEYS = ("topology", "n_nodes", "dim", "side", "beta", "dispersal", "radius", "alpha",
             "range_cap", "seed", "record_half")


def _model_config(args):
    return sim.ModelConfig(**{k: getattr(args, k) for k in _SIM_KEYS})


def cmd_sim(args):
    config = _model_config(args)
    rec = sim.run(config, args.p0, args.k_max)
    rec.write_csv(args.out)
    rec.write_metadata(args.out + ".json")
    outputs = [args.out, args.out + ".json"]
    if args.scatter:
        d = rec.densities
        _write_rows(args.scatter, ["k", "rho_k", "rho_next"],
                    [[k, _fmt(d[k]), _fmt(d[k + 1])] for k in range(d.size - 1)])
        outputs.append(args.scatter)
    return outputs, EXIT_OK


def cmd_snapshot(args):
    config = _model_config(args)
    rec = sim.run(config, args.p0, args.k_max)
    grid = sim.snapshot(rec.final_state)
    (sim.write_pgm if args.format == "pgm" else sim.write_rle)(grid, args.out)
    return [args.out], EXIT_OK


def cmd_replay(args):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    return main(manifest["argv"], _replaying=True)


COMMANDS = {
    "orbit": cmd_orbit,
    "bifurcate": cmd_bifurcate,
    "certify": cmd_certify,
    "liyorke": cmd_liyorke,
    "theta-table": cmd_theta_table,
    "sim": cmd_sim,
    "snapshot": cmd_snapshot,
}


# -- parser ---------------------------------------------------------------

def _common(p, out_default):
    p.add_argument("--out", default=out_default, help="output path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--long", action="store_true", help="allow long-running jobs")
    p.add_argument("--threads", type=int, default=1, help="advisory; runs are single-threaded")
    p.add_argument("-v", "--verbose", action="store_true")


def _map_options(p):
    p.add_argument("--map", choices=("tree", "lattice"), default="tree")
    p.add_argument("--table", help="theta table CSV for --map lattice")
    p.add_argument("--dim", type=int, default=2, help="lattice dimension when building a table")
    p.add_argument("--box-side", type=int, default=256)
    p.add_argument("--n-samples", type=int, default=16)
    p.add_argument("--table-seed", type=int, default=0)
    p.add_argument("--cache-dir", default=".epichaos-cache")
    p.add_argument("--p-c", type=float, default=None)


def _sim_options(p):
    p.add_argument("--topology", choices=("rrg", "torus"), default="torus")
    p.add_argument("--n-nodes", type=int, default=0)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--side", type=int, default=100)
    p.add_argument("--beta", type=_positive(float), default=2.25)
    p.add_argument("--dispersal", choices=("global", "radius"), default="global")
    p.add_argument("--radius", type=int, default=0)
    p.add_argument("--alpha", type=_unit, default=0.01)
    p.add_argument("--range-cap", type=lambda s: None if s.lower() == "none" else int(s),
                   default=None)
    p.add_argument("--record-half", action="store_true")
    p.add_argument("--p0", type=_unit, default=0.1)
    p.add_argument("--k-max", type=int, default=100)


def build_parser():
    parser = _Parser(prog="epichaos", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=SCHEMAS)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub = {}

    p = sub["orbit"] = subs.add_parser("orbit", help="orbit of a limiting map")
    p.add_argument("--beta", type=_positive(float), required=True)
    p.add_argument("--p0", type=_unit, default=0.1)
    p.add_argument("--k-max", type=int, default=550)
    _map_options(p)
    _common(p, "orbit.csv")

    p = sub["bifurcate"] = subs.add_parser("bifurcate", help="orbit tails over a beta grid")
    p.add_argument("--beta-min", type=_positive(float), default=1.0)
    p.add_argument("--beta-max", type=_positive(float), default=3.0)
    p.add_argument("--n-betas", type=int, default=201)
    p.add_argument("--p0", type=_unit, default=0.1)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--keep", type=int, default=50)
    _map_options(p)
    _common(p, "bifurcate.csv")

    p = sub["certify"] = subs.add_parser("certify", help="infimum of |(h^3)'| on a beta grid")
    p.add_argument("--beta-lo", type=float, default=None,
                   help="default: 2 log 2 + step")
    p.add_argument("--beta-hi", type=float, default=tree.BETA_CERT_MAX)
    p.add_argument("--step", type=_positive(float), default=1e-3)
    _common(p, "certify.json")

    p = sub["liyorke"] = subs.add_parser("liyorke", help="witness chain and phi checks")
    p.add_argument("--beta-lo", type=float, default=1.4)
    p.add_argument("--beta-hi", type=float, default=tree.BETA_CERT_MAX)
    p.add_argument("--n-betas", type=int, default=50)
    _common(p, "liyorke.csv")

    p = sub["theta-table"] = subs.add_parser("theta-table", help="Monte Carlo theta_L table")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--box-side", type=int, default=64)
    p.add_argument("--grid", default="default", help="'default', 'lo:hi:n' or a comma list")
    p.add_argument("--n-samples", type=int, default=16)
    p.add_argument("--criterion", choices=lattice.CRITERIA, default="wrapping")
    p.add_argument("--p-c", type=float, default=None)
    _common(p, "theta.csv")

    p = sub["sim"] = subs.add_parser("sim", help="simulate the particle system")
    _sim_options(p)
    p.add_argument("--scatter", help="also write (rho_k, rho_k+1) pairs here")
    _common(p, "trajectory.csv")

    p = sub["snapshot"] = subs.add_parser("snapshot", help="final occupancy grid of a 2d run")
    _sim_options(p)
    p.add_argument("--format", choices=("pgm", "rle"), default="pgm")
    _common(p, "snapshot.pgm")

    p = subs.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser, sub


def _write_manifest(args, argv, outputs, duration):
    params = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
    manifest = {
        "subcommand": args.command,
        "params": params,
        "seed": args.seed,
        "outputs": outputs,
        "version": __version__,
        "duration_s": duration,
        "argv": list(argv),
    }
    with open(outputs[0] + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


def main(argv=None, _replaying=False):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        args = _apply_config(parser, sub, argv)
        if args.command == "replay":
            return cmd_replay(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads != 1:
            log.info("--threads is advisory; running single-threaded")
        t0 = time.perf_counter()
        outputs, code = COMMANDS[args.command](args)
        _write_manifest(args, argv, outputs, time.perf_counter() - t0)
        return code
    except UsageError as exc:
        print(f"epichaos: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError) as exc:
        print(f"epichaos: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EpichaosError, ValueError) as exc:
        print(f"epichaos: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"epichaos: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
