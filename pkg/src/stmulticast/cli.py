"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 constraint
violation.
"""

import argparse
import math
import sys
import warnings

import numpy as np

from . import capacity as cap
from .decomp import gmd, jet2, kgmd_spacetime, verify_decomp
from .errors import ConstraintViolation, InvalidInputError, NumericalFailure, StMulticastError
from .fileio import Scenario, dumps, matrix_to_json, read_matrix, read_scenario, write_json
from .linalg import Tolerance
from .scheme import EQUAL_DET_RTOL, multicast_simulate

TABLE_TARGETS = ["1/3", "ts", "1/2", "3/5", "2/3", "3/4", "4/5", "9/10"]
TABLE_CP2P = 10.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidInputError(f"{self.prog}: {message}")


def _tol(args):
    return Tolerance(rel=args.rel_tol, abs=args.abs_tol)


def _emit(args, payload, text):
    if args.output:
        write_json(args.output, payload)
    sys.stdout.write(dumps(payload) if args.json else text)


def _fmt(values, digits=6):
    return ", ".join(f"{v:.{digits}f}" for v in values)


def cmd_gmd(args):
    a = read_matrix(args.input)
    res = gmd(a, _tol(args))
    defect = float(np.linalg.norm(res.U @ res.T @ res.V.conj().T - a) / np.linalg.norm(a))
    payload = {"U": matrix_to_json(res.U), "T": matrix_to_json(res.T),
               "V": matrix_to_json(res.V), "diagonal": res.diagonal.tolist(),
               "defect": defect}
    _emit(args, payload, f"diagonal: {_fmt(res.diagonal)}\ndefect: {defect:.3e}\n")
    return 0


def cmd_jet(args):
    a1 = read_matrix(args.inputs[0])
    a2 = read_matrix(args.inputs[1])
    res = jet2(a1, a2, _tol(args))
    vh = res.V.conj().T
    defect = max(float(np.linalg.norm(res.U1 @ res.R1 @ vh - a1) / np.linalg.norm(a1)),
                 float(np.linalg.norm(res.U2 @ res.R2 @ vh - a2) / np.linalg.norm(a2)))
    d1 = np.real(np.diag(res.R1))
    d2 = np.real(np.diag(res.R2))
    payload = {k: matrix_to_json(getattr(res, k)) for k in ("U1", "R1", "U2", "R2", "V")}
    payload.update(diagonal_1=d1.tolist(), diagonal_2=d2.tolist(), defect=defect)
    _emit(args, payload,
          f"diagonal 1: {_fmt(d1)}\ndiagonal 2: {_fmt(d2)}\ndefect: {defect:.3e}\n")
    return 0


def cmd_kgmd(args):
    tol = _tol(args)
    mats = [read_matrix(p) for p in args.inputs]
    if not args.allow_unequal:
        roots = []
        for a in mats:
            if a.shape[0] != a.shape[1]:
                raise ConstraintViolation(f"matrices must be square, got {a.shape[0]}x{a.shape[1]}")
            sign, logdet = np.linalg.slogdet(a)
            roots.append(math.exp(logdet / a.shape[0]) if sign != 0 else 0.0)
        if max(roots) - min(roots) > EQUAL_DET_RTOL * max(roots):
            raise ConstraintViolation(
                "inputs have unequal |det|^(1/n) "
                f"({', '.join(f'{r:.6g}' for r in roots)}); pass --allow-unequal")
    dec = kgmd_spacetime(mats, args.copies, tol)
    rep = verify_decomp(dec, mats, tol)
    payload = {
        "n": dec.n, "K": dec.K, "N": dec.N, "m": dec.m,
        "theta_rows": dec.theta_rows,
        "diag_values": list(dec.diag_value_list),
        "stage_groups": dec.stage_pairs,
        "U": [matrix_to_json(u) for u in dec.U_list],
        "V": matrix_to_json(dec.V),
        "T": [matrix_to_json(t) for t in dec.T_list],
        "verification": {"reconstruction": rep.reconstruction,
                         "diagonal_deviation": rep.diagonal_deviation,
                         "below_diagonal": rep.below_diagonal,
                         "orthonormality": rep.orthonormality},
    }
    lines = [f"n={dec.n} K={dec.K} N={dec.N} m={dec.m} "
             f"fraction={dec.capacity_fraction:.4f}",
             f"retained rows: {' '.join(map(str, dec.theta_rows))}"]
    for i, (g, t) in enumerate(zip(dec.diag_value_list, dec.T_list), start=1):
        lines.append(f"user {i}: diagonal value {g:.6f}  "
                     f"diag(T) {_fmt(np.real(np.diag(t)))}")
    lines.append(f"reconstruction {rep.reconstruction:.2e}  diagonal {rep.diagonal_deviation:.2e}  "
                 f"below-diagonal {rep.below_diagonal:.2e}  "
                 f"orthonormality {rep.orthonormality:.2e}")
    _emit(args, payload, "\n".join(lines) + "\n")
    return 0


def cmd_capacity(args):
    sc = read_scenario(args.scenario)
    chans = sc.channel_set()
    rates = [cap.mutual_information(h, chans.Cx) for h in chans.H_list]
    payload = {"mutual_information": rates, "min": min(rates)}
    text = f"{_fmt(rates)}; min {min(rates):.6f}\n"
    if args.optimize:
        try:
            res = cap.multicast_capacity(chans)
        except NumericalFailure as exc:
            best = exc.best
            if best is not None:
                sys.stdout.write(f"best {best.rate:.6f}, bound {best.upper_bound:.6f}\n")
            raise
        payload.update(capacity=res.rate, upper_bound=res.upper_bound, gap=res.gap,
                       iterations=res.iterations, covariance=matrix_to_json(res.covariance))
        text += (f"optimum {res.rate:.6f} (certified gap {res.gap:.1e}, "
                 f"{res.iterations} iterations)\n")
    _emit(args, payload, text)
    return 0


def _regime(args):
    if args.asymptotic:
        return cap.high_snr_example()
    if not (args.cp2p > 0 and math.isfinite(args.cp2p)):
        raise InvalidInputError("--cp2p must be a positive number of bits")
    return cap.build_example(args.cp2p, 1.0)


def cmd_table1(args):
    ex = _regime(args)
    c = cap.multicast_capacity(ex).rate
    ts = cap.timesharing_rate(ex) / c
    bf = cap.benchmark_beamforming_rate(ex) / c
    ref = cap.build_example(TABLE_CP2P, 1.0)
    ts_ref = cap.timesharing_rate(ref) / cap.multicast_capacity(ref).rate
    targets = [cap.as_fraction(ts_ref) if t == "ts" else cap.as_fraction(t)
               for t in TABLE_TARGETS]
    gmd_row = [cap.min_channel_uses(2, 3, f, "GMD") for f in targets]
    jet_row = [cap.min_channel_uses(2, 3, f, "JET") for f in targets]
    pct = [round(100 * float(f)) for f in targets]
    label = "P -> infinity" if args.asymptotic else f"C_p2p = {ex.C_p2p:g} bits"
    payload = {"targets": [float(f) for f in targets], "gmd": gmd_row, "jet": jet_row,
               "regime": "asymptotic" if args.asymptotic else "cp2p",
               "C_p2p": ex.C_p2p, "power": ex.P,
               "timesharing_fraction": ts, "benchmark_fraction": bf}
    w = 5
    lines = ["% capacity".ljust(12) + "".join(f"{p:>{w}}" for p in pct),
             "GMD".ljust(12) + "".join(f"{v:>{w}}" for v in gmd_row),
             "JET".ljust(12) + "".join(f"{v:>{w}}" for v in jet_row),
             f"{label}: time-sharing {ts * 100:.0f}%, benchmark {bf * 100:.0f}%"]
    _emit(args, payload, "\n".join(lines) + "\n")
    return 0


def cmd_simulate(args):
    sc = read_scenario(args.scenario)
    seed = args.seed if args.seed is not None else (sc.seed or 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = multicast_simulate(sc.channel_set(), args.copies, args.trials, seed,
                                 allow_unequal=args.allow_unequal,
                                 edge_streams=args.edge_streams, tol=_tol(args))
    lines = [f"n={rep.n} K={rep.K} N={rep.N} m={rep.m} trials={rep.trials} seed={rep.seed} "
             f"edge streams={rep.edge_streams}",
             f"{'user':>4} {'stream':>6} {'predicted':>12} {'measured':>12} {'rel.err':>9}"]
    for i, u in enumerate(rep.users, start=1):
        for k, (p, m) in enumerate(zip(u.predicted_sinr, u.measured_sinr), start=1):
            err = abs(m - p) / p if p > 0 else float("nan")
            lines.append(f"{i:>4} {k:>6} {p:>12.4f} {m:>12.4f} {err:>9.2%}")
    lines.append(f"rate {rep.scheme_rate_per_use:.6f} bits/use, fraction {rep.capacity_fraction:.4f}, "
                 f"power/use {rep.power_per_use:.6f} (limit {rep.power:g})")
    lines += [f"warning: {w}" for w in rep.warnings]
    _emit(args, rep.to_dict(), "\n".join(lines) + "\n")
    return 0


def cmd_example(args):
    if args.asymptotic:
        ex = cap.high_snr_example()
    else:
        if not (args.cp2p > 0 and math.isfinite(args.cp2p)):
            raise InvalidInputError("--cp2p must be a positive number of bits")
        ex = cap.build_example(args.cp2p, args.power)
    sc = Scenario(ex.H_list, ex.P, None, args.seed)
    payload = sc.to_json()
    if args.output:
        write_json(args.output, payload)
    if args.json or not args.output:
        sys.stdout.write(dumps(payload))
    else:
        sys.stdout.write(f"alpha^2 = {ex.alpha2:.6g}, beta^2 = {ex.beta2:.6g}, P = {ex.P:g}\n")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rel-tol", type=float, default=Tolerance.rel,
                        help="relative tolerance (default %(default)g)")
    common.add_argument("--abs-tol", type=float, default=Tolerance.abs,
                        help="absolute tolerance (default %(default)g)")
    common.add_argument("--output", "-o", help="write the JSON result to this path")
    common.add_argument("--json", action="store_true", help="print JSON instead of text")

    parser = _Parser(prog="stmulticast",
                     description="Space-time multicast triangularizations and rate calculators.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gmd", parents=[common], help="geometric mean decomposition")
    p.add_argument("input")
    p.set_defaults(func=cmd_gmd)

    p = sub.add_parser("jet", parents=[common], help="joint equi-diagonal triangularization")
    p.add_argument("inputs", nargs=2)
    p.set_defaults(func=cmd_jet)

    p = sub.add_parser("kgmd", parents=[common], help="space-time joint GMD of K matrices")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--copies", "-N", type=int, required=True)
    p.add_argument("--allow-unequal", action="store_true",
                   help="accept unequal determinants and report per-user diagonals")
    p.set_defaults(func=cmd_kgmd)

    p = sub.add_parser("capacity", parents=[common], help="mutual information and multicast capacity")
    p.add_argument("scenario")
    p.add_argument("--optimize", action="store_true", help="also solve the max-min program")
    p.set_defaults(func=cmd_capacity)

    for name, func, hlp in (("table1", cmd_table1, "channel uses per capacity fraction"),
                            ("example", cmd_example, "write the three-user example scenario")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--cp2p", type=float, default=TABLE_CP2P,
                       help="individual capacity in bits (default %(default)g)")
        g.add_argument("--asymptotic", action="store_true", help="high-SNR regime")
        if name == "example":
            p.add_argument("--power", type=float, default=1.0)
            p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo SINR measurement")
    p.add_argument("scenario")
    p.add_argument("--copies", "-N", type=int, required=True)
    p.add_argument("--trials", "-T", type=int, default=100_000)
    p.add_argument("--seed", "-S", type=int, default=None)
    p.add_argument("--allow-unequal", action="store_true")
    p.add_argument("--edge-streams", choices=["filler", "silent"], default="filler",
                   help="content of the truncated dimensions (default %(default)s)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except StMulticastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
