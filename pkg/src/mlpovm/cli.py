"""Command-line front end: figures of merit, certificates and simulations as CSV.

Every CSV starts with a ``#`` comment line recording the command, its
configuration and the seed, followed by a header row. Floats are written with
``repr`` so the output round-trips exactly and is byte-identical between runs
with the same configuration and seed, whatever the worker count.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import greedy, ml_povm
from .bloch import PolVec, cap_fidelity_threshold, uniform_sample
from .fockspace import verify_ml_conditions
from .montecarlo import mean_estimate, proportion_estimate, variance_estimate
from .photon_stats import Kind, PhotonDistribution, fock, from_name, poisson, thermal

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2

SCENARIOS = ("N", "Poi", "th")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_sweep(spec: str) -> np.ndarray:
    """``start:stop:step`` with both ends included."""
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise UsageError(f"bad sweep {spec!r}; expected start:stop:step") from None
    if not (step > 0 and stop >= start and math.isfinite(stop) and start >= 0):
        raise UsageError(f"bad sweep {spec!r}; need 0 <= start <= stop and step > 0")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12)


@dataclass(frozen=True)
class RunConfig:
    command: str
    dist: str = "poisson"
    param: float = 1.0
    epsilon: float = 0.2 * math.pi
    sweep: str = "0:30:0.5"
    u_sweep: str = "0:1:0.05"
    trials: int = greedy.DEFAULT_TRIALS
    seed: int = 0
    count: int = 20
    photons: int = 10
    workers: int = 1

    def comment(self) -> str:
        keys = {
            "likelihood": ("dist", "param", "sweep", "u_sweep"),
            "fig2": ("epsilon", "sweep", "trials", "seed"),
            "fig3": ("sweep", "trials", "seed"),
            "fig4": ("sweep", "trials", "seed"),
            "verify": ("dist", "param", "count", "seed"),
            "trace": ("photons", "seed"),
        }[self.command]
        return "# mlpovm " + self.command + " " + " ".join(f"{k}={getattr(self, k)!r}" for k in keys)

    def distribution(self) -> PhotonDistribution:
        try:
            return from_name(self.dist, self.param)
        except (ValueError, OSError) as exc:
            raise UsageError(str(exc)) from None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(config: RunConfig, header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(config.comment() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed & (2**64 - 1), *keys]).generate_state(1, dtype=np.uint64)[0])


def _scenario(name: str, nbar: float) -> PhotonDistribution | None:
    if name == "N":
        return fock(int(nbar)) if float(nbar).is_integer() else None
    return poisson(nbar) if name == "Poi" else thermal(nbar)


def _greedy_fidelities(config: RunConfig, scen: int, k: int, dist: PhotonDistribution | None):
    if dist is None or config.trials <= 0:
        return None
    return greedy.simulate_fidelities(dist, config.trials, _sub_seed(config.seed, scen, k), config.workers)


# -- commands -------------------------------------------------------------------

def cmd_likelihood(config: RunConfig) -> str:
    base = config.distribution()
    us = parse_sweep(config.u_sweep)
    if us[-1] > 1.0:
        raise UsageError("fidelity sweep must stay within [0, 1]")
    if base.kind is Kind.CUSTOM:
        dists = [(base.mean(), base)]
    else:
        params = parse_sweep(config.sweep)
        if base.kind is Kind.FOCK and not all(float(p).is_integer() for p in params):
            raise UsageError("Fock sweeps need integer photon numbers")
        dists = [(p, from_name(base.kind.value, p)) for p in params]
    rows = []
    for nbar, dist in dists:
        for u, val in zip(us, np.atleast_1d(ml_povm.likelihood_u(dist, us))):
            rows.append((nbar, u, val))
    return _write_csv(config, ["nbar", "fidelity_u", "likelihood"], rows)


def cmd_fig2(config: RunConfig) -> str:
    if not (0.0 <= config.epsilon <= math.pi):
        raise UsageError("epsilon must lie in [0, pi]")
    threshold = cap_fidelity_threshold(config.epsilon)
    header = (["nbar"] + [f"Q_{s}" for s in SCENARIOS] + [f"Q_{s}_g" for s in SCENARIOS]
              + [f"Q_{s}_g_se" for s in SCENARIOS])
    rows = []
    for k, nbar in enumerate(parse_sweep(config.sweep)):
        exact, mc, se = [], [], []
        for j, s in enumerate(SCENARIOS):
            dist = _scenario(s, nbar)
            exact.append(None if dist is None else ml_povm.success_probability(dist, config.epsilon))
            f = _greedy_fidelities(config, j, k, dist)
            est = None if f is None else proportion_estimate(f >= threshold)
            mc.append(None if est is None else est.value)
            se.append(None if est is None else est.std_error)
        rows.append([nbar, *exact, *mc, *se])
    return _write_csv(config, header, rows)


def cmd_fig3(config: RunConfig) -> str:
    header = (["nbar"] + [f"F_{s}" for s in SCENARIOS] + [f"F_{s}_g" for s in SCENARIOS]
              + [f"F_{s}_g_se" for s in SCENARIOS])
    rows = []
    for k, nbar in enumerate(parse_sweep(config.sweep)):
        exact, mc, se = [], [], []
        for j, s in enumerate(SCENARIOS):
            dist = _scenario(s, nbar)
            exact.append(None if dist is None else ml_povm.mean_fidelity(dist))
            f = _greedy_fidelities(config, j, k, dist)
            est = None if f is None else mean_estimate(f)
            mc.append(None if est is None else est.value)
            se.append(None if est is None else est.std_error)
        rows.append([nbar, *exact, *mc, *se])
    return _write_csv(config, header, rows)


def cmd_fig4(config: RunConfig) -> str:
    """Mean fidelity with one-standard-deviation bands; bands are not clipped to [0, 1]."""
    header = ["nbar"]
    for s in SCENARIOS:
        header += [f"F_{s}", f"std_{s}", f"F_{s}_lo", f"F_{s}_hi",
                   f"F_{s}_g", f"std_{s}_g", f"F_{s}_g_lo", f"F_{s}_g_hi", f"F_{s}_g_se"]
    rows = []
    for k, nbar in enumerate(parse_sweep(config.sweep)):
        row = [nbar]
        for j, s in enumerate(SCENARIOS):
            dist = _scenario(s, nbar)
            if dist is None:
                row += [None] * 9
                continue
            f_ml, sd_ml = ml_povm.mean_fidelity(dist), ml_povm.fidelity_std(dist)
            row += [f_ml, sd_ml, f_ml - sd_ml, f_ml + sd_ml]
            f = _greedy_fidelities(config, j, k, dist)
            if f is None:
                row += [None] * 5
                continue
            mean = mean_estimate(f)
            sd = math.sqrt(variance_estimate(f).value)
            row += [mean.value, sd, mean.value - sd, mean.value + sd, mean.std_error]
        rows.append(row)
    return _write_csv(config, header, rows)


def cmd_verify(config: RunConfig, block_scale: dict[int, float] | None = None) -> tuple[str, bool]:
    """Certify the optimality conditions at ``count`` random outcomes."""
    dist = config.distribution()
    rng = np.random.default_rng(config.seed)
    lines = [config.comment(), f"# n_max={dist.n_max}"]
    ok = True
    for _ in range(config.count):
        r = uniform_sample(rng)
        report = verify_ml_conditions(r, dist, block_scale=block_scale)
        ok &= report.passed
        lines.append(f"theta={r.theta!r} phi={r.phi!r} " + report.to_record())
    lines.append(f"# result={'pass' if ok else 'FAIL'}")
    return "\n".join(lines) + "\n", ok


def cmd_trace(config: RunConfig) -> str:
    rng = np.random.default_rng(config.seed)
    r0 = uniform_sample(rng)
    result = greedy.run_trial(config.photons, r0, rng)
    lines = [config.comment(), f"# r0 theta={r0.theta!r} phi={r0.phi!r}", "# k theta phi outcome"]
    lines += result.trace.to_records()
    lines.append(f"# estimate theta={result.estimate.theta!r} phi={result.estimate.phi!r} "
                 f"fidelity={result.fidelity!r} random_fallback={result.trace.random_fallback}")
    return "\n".join(lines) + "\n"


# -- argument handling -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mlpovm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, sweep_default):
        p.add_argument("--sweep", default=sweep_default, help="start:stop:step, both ends included")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="-", help="output path ('-' for stdout)")

    def mc(p):
        p.add_argument("--trials", type=int, default=greedy.DEFAULT_TRIALS,
                       help="greedy Monte Carlo trials per point (0 skips the greedy columns)")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("likelihood", help="likelihood over (nbar, fidelity)")
    common(p, "0:20:1")
    p.add_argument("--dist", default="poisson")
    p.add_argument("--param", type=float, default=0.0, help="ignored except for custom distributions")
    p.add_argument("--u-sweep", dest="u_sweep", default="0:1:0.05")

    p = sub.add_parser("fig2", help="success probabilities Q(epsilon)")
    common(p, "0:30:0.5")
    mc(p)
    p.add_argument("--epsilon", type=float, default=0.2 * math.pi)

    for name, text in (("fig3", "mean fidelities"), ("fig4", "mean fidelities with standard deviations")):
        p = sub.add_parser(name, help=text)
        common(p, "0:30:0.5")
        mc(p)

    p = sub.add_parser("verify", help="certify the optimality conditions numerically")
    p.add_argument("--dist", default="fock")
    p.add_argument("--param", type=float, default=3.0)
    p.add_argument("--count", type=int, default=20, help="number of random outcomes to check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--corrupt-block", type=int, default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("trace", help="one greedy run as line-delimited records")
    p.add_argument("--photons", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    return parser


def _emit(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fields = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    config = RunConfig(**fields)
    try:
        if getattr(args, "trials", 0) < 0 or getattr(args, "workers", 1) < 1:
            raise UsageError("trials must be >= 0 and workers >= 1")
        if args.command == "verify":
            scale = None if args.corrupt_block is None else {args.corrupt_block: 1.01}
            text, ok = cmd_verify(config, scale)
            _emit(text, args.out)
            if not ok:
                sys.stderr.write("verification failed\n")
                return EXIT_VERIFY_FAILED
            return EXIT_OK
        command = {"likelihood": cmd_likelihood, "fig2": cmd_fig2, "fig3": cmd_fig3,
                   "fig4": cmd_fig4, "trace": cmd_trace}[args.command]
        _emit(command(config), args.out)
    except UsageError as exc:
        sys.stderr.write(f"mlpovm: error: {exc}\n")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
