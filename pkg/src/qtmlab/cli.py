"""Command-line entry point.

Design rules for every subcommand: line-oriented plain-text reports, no
timestamps, fixed float formatting, fixed iteration orders, and named
`CHECK <name> PASS|FAIL <value> <bound>` lines for every hard bound.  Exit
codes: 0 success, 2 parse error, 3 validation error, 4 bound violation.

Thread pinning happens before numpy is imported: QTM_THREADS (or --threads)
sets the usual BLAS/OpenMP environment knobs, and `--threads 1` is the
reference mode for byte-identical reports.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_BOUND = 4

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _pin_threads(argv) -> int:
    n = None
    for i, a in enumerate(argv):
        if a == "--threads" and i + 1 < len(argv):
            try:
                n = int(argv[i + 1])
            except ValueError:
                pass
        elif a.startswith("--threads="):
            try:
                n = int(a.split("=", 1)[1])
            except ValueError:
                pass
    env = os.environ.get("QTM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            pass
    if n is None:
        n = 1
    for var in _THREAD_VARS:
        os.environ[var] = str(n)
    return n


def fmt(x) -> str:
    """Deterministic float formatting for reports."""
    if isinstance(x, int):
        return str(x)
    return f"{float(x):.12g}"


def check_line(name: str, ok: bool, value, bound) -> str:
    return f"CHECK {name} {'PASS' if ok else 'FAIL'} {fmt(value)} {fmt(bound)}"


class BoundViolation(Exception):
    pass


def _load_machine(path):
    from .machines import load_machine

    return load_machine(path)


def _str_or_dash(s: str) -> str:
    return s if s else "-"


# -- subcommand bodies (return list of lines; raise for nonzero exits) --------


def cmd_validate(args) -> list[str]:
    from .evolution import build_evolution, wellformed_check
    from .machines import ConfigSpace

    m = _load_machine(args.machine)
    cs = ConfigSpace(m, args.window)
    build_evolution(cs)  # raises on uncovered configurations
    rep = wellformed_check(cs)
    lines = [
        f"machine {m.name}",
        f"tapes {m.tapes}",
        f"window {cs.window}",
        f"states {len(m.states)}",
        f"rules {len(m.rules)}",
        f"dim {cs.dim}",
        f"backend {rep.backend}",
        check_line("wellformed", rep.passed, rep.defect, 1e-9),
    ]
    if rep.exact_zero:
        lines.append("exact-defect 0")
    if not rep.passed:
        raise BoundViolation("\n".join(lines))
    return lines


def cmd_evolve(args) -> list[str]:
    import numpy as np

    from .evolution import run_machine
    from .machines import ConfigSpace
    from .operators import Operator, ind_string

    m = _load_machine(args.machine)
    cs = ConfigSpace(m, args.window)
    bits = "" if args.input == "-" else args.input
    if any(c not in "01" for c in bits):
        raise ValueError(f"input must be a bit string, got {args.input!r}")
    n = 1 << len(bits)
    sigma = np.zeros((n, n), dtype=np.complex128)
    sigma[int(bits, 2) if bits else 0, int(bits, 2) if bits else 0] = 1.0
    profile, output = run_machine(
        cs, Operator(sigma, hermitian=True, psd=True), t_max=args.t_max, eta=args.eta
    )
    lines = [f"machine {m.name}", f"input {_str_or_dash(bits)}", f"window {cs.window}"]
    for t, w in enumerate(profile.weights):
        lines.append(f"weight {t} {fmt(float(w))}")
    if profile.halted:
        lines.append(f"halted {profile.t}")
        if output is not None:
            lines.append(f"lambda {fmt(output.lambda_weight)}")
            for idx in range(output.dim):
                mass = output.expectation(ind_string(idx))
                if idx == 0:
                    mass -= output.lambda_weight
                if mass > 1e-12:
                    lines.append(f"output {_str_or_dash(ind_string(idx))} {fmt(mass)}")
    else:
        lines.append("halted no")
        lines.append(f"diagnostic {profile.diagnostic}")
    return lines


def cmd_halting_spaces(args) -> list[str]:
    from .halting import enumerate_projections

    m = _load_machine(args.machine)
    dec = enumerate_projections(m, args.k, args.t_max, window=args.window)
    lines = [
        f"machine {m.name}",
        f"k {args.k}",
        f"t-max {args.t_max}",
        f"window {dec.window}",
    ]
    for s in dec.spaces:
        lines.append(f"space t {s.t} rank {s.rank}")
    worst = 0.0
    for i in range(len(dec.spaces)):
        pi = dec.spaces[i].projection.to_dense()
        for jj in range(i + 1, len(dec.spaces)):
            import numpy as np

            worst = max(
                worst,
                float(np.trace(pi @ dec.spaces[jj].projection.to_dense()).real),
            )
    lines.append(check_line("orthogonality", worst <= 1e-9, worst, 1e-9))
    bound = (1 << args.k) + 1e-9
    lines.append(check_line("trace-sum", dec.total_rank <= bound, dec.total_rank, 1 << args.k))
    if worst > 1e-9 or dec.total_rank > bound:
        raise BoundViolation("\n".join(lines))
    return lines


def cmd_approx(args) -> list[str]:
    import numpy as np

    from .channel import build_channel, error_certificate, random_pure_inputs
    from .operators import Operator

    m = _load_machine(args.machine)
    ch = build_channel(m, args.k, args.t, args.delta, window=args.window)
    lines = [
        f"machine {m.name}",
        f"k {args.k}",
        f"t {args.t}",
        f"delta {ch.delta}",
        f"gamma {ch.gamma}",
        f"window {ch.window}",
        f"dim {ch.dim}",
        f"precision-bits {ch.precision_bits}",
        check_line("round-defect", ch.round_defect <= float(ch.round_budget) * (1 + 1e-9),
                   ch.round_defect, float(ch.round_budget)),
    ]
    if not args.cert:
        return lines
    rng = np.random.default_rng(args.seed)
    sigmas = random_pure_inputs(args.k, args.samples, rng)
    n = 1 << args.k
    for b in range(n):  # classical basis inputs always included
        v = np.zeros((n, n), dtype=np.complex128)
        v[b, b] = 1.0
        sigmas.append(Operator(v, hermitian=True, psd=True))
    cert = error_certificate(ch, sigmas)
    lines.extend(
        [
            f"samples {cert.samples}",
            check_line("per-step", cert.per_step_ok, cert.max_step_ratio, 1),
            check_line("final", cert.final_ok, cert.max_final, float(ch.delta)),
        ]
    )
    if not cert.ok:
        raise BoundViolation("\n".join(lines))
    return lines


def cmd_coverage(args) -> list[str]:
    from .decoder import coverage_table

    m = _load_machine(args.machine)
    table = coverage_table(
        m, args.k, t_max=args.t_max, ell_max=args.ell_max, window=args.window
    )
    lines = [
        f"machine {m.name}",
        f"k {args.k}",
        f"j {table.j}",
        f"threshold {fmt(table.threshold)}",
        "order lexicographic (t, ell, y)",
    ]
    for r in table.rows:
        lines.append(f"row {r.t} {r.ell} {_str_or_dash(r.y)} {fmt(r.score)}")
    lines.append(check_line("rows", len(table.rows) <= table.bound_2k1,
                            len(table.rows), table.bound_2k1))
    lines.append(check_line("trace-sum", table.trace_sum <= (1 << args.k) + 1e-9,
                            table.trace_sum, 1 << args.k))
    return lines


def cmd_decode(args) -> list[str]:
    from .decoder import coverage_table

    m = _load_machine(args.machine)
    table = coverage_table(m, args.k, t_max=args.t_max, window=args.window)
    y = table.decode(args.b)
    return [_str_or_dash(y)]


def _load_reference(path):
    from .complexity import load_reference

    return load_reference(path)


def _dictionary(spec: str, k_max: int):
    from .complexity import classical_dictionary

    if spec != "basic":
        raise ValueError(f"unknown dictionary spec {spec!r} (only 'basic' ships)")
    return classical_dictionary(k_max)


def cmd_complexity(args) -> list[str]:
    from fractions import Fraction

    from .complexity import hbvl, hbvl_eps, plain_complexity

    x = "" if args.x == "-" else args.x
    rm = _load_reference(args.classical)
    qtm = _load_machine(args.quantum)
    dictionary = _dictionary(args.dict, args.k_max)
    c = plain_complexity(x, rm)
    lines = [f"x {_str_or_dash(x)}", f"C {c.display}"]
    for kk in range(1, args.k_max + 1):
        r = hbvl_eps(x, qtm, Fraction(1, kk), dictionary, t_max=args.t_max)
        lines.append(f"hbvl-eps 1/{kk} {r.display}")
    h = hbvl(x, qtm, dictionary, k_max=args.k_max, t_max=args.t_max)
    lines.append(f"Hbvl {h.display}")
    if h.witness:
        lines.append(f"witness {h.witness}")
        lines.append(f"aux-mode {h.aux_mode}")
    if c.value is not None and h.value is not None:
        lines.append(f"gap {abs(c.value - h.value)}")
    else:
        lines.append("gap ?")
    return lines


def cmd_gap(args) -> list[str]:
    from .complexity import load_corpus, mueller_gap

    corpus = load_corpus(args.corpus)
    rm = _load_reference(args.classical)
    qtm = _load_machine(args.quantum)
    dictionary = _dictionary(args.dict, args.k_max)
    rep = mueller_gap(corpus, rm, qtm, dictionary, k_max=args.k_max, t_max=args.t_max)
    lines = [
        f"corpus {len(corpus)}",
        f"classical {rm.name}",
        f"quantum {qtm.name}",
        f"k-max {args.k_max}",
    ]
    lines.extend(rep.lines())
    lines.append(f"c-sim {rep.c_sim}")
    for w in rep.warnings:
        lines.append(f"warning {w}")
    return lines


def cmd_nu(args) -> list[str]:
    from fractions import Fraction

    from .mixture import build_nu, diagonal_vs_m, domination_report, load_mixture

    mix = load_mixture(args.mix)
    nu = build_nu(mix, steps=args.steps)
    import numpy as np

    tr = float(np.real(nu.trace()))
    steps_label = "all" if args.steps is None else str(args.steps)
    lines = [f"programs {len(mix.programs)}", f"steps {steps_label}"]
    for w, lc in mix.programs:
        lines.append(f"program {lc.name} weight {w} terms {len(lc.terms)}")
    lines.append(f"trace {fmt(tr)}")
    diag_sum = float(np.real(np.diag(nu.to_dense())).sum())
    lines.append(check_line("diag-semimeasure", diag_sum <= 1 + 1e-9, diag_sum, 1))
    violations = 0
    if args.check_domination:
        for row in domination_report(mix, steps=args.steps):
            ok = row["dominated"]
            violations += 0 if ok else 1
            lines.append(
                f"dominated {row['name']} {'yes' if ok else 'NO'} "
                f"ml-lower-bound {row['ml_lower_bound']} tail {row['tail_weight']}"
            )
    if args.m_len is not None:
        from .complexity import BUILTIN_MACHINES, toy_m

        rm = BUILTIN_MACHINES["prefix-unary"]()
        table = {}
        for ell in range(args.m_len + 1):
            for v in range(1 << ell):
                x = format(v, f"0{ell}b") if ell else ""
                table[x] = toy_m(x, rm)
        rep = diagonal_vs_m(mix, table, steps=args.steps)
        lines.append(f"c1 {fmt(rep.c1)} witness {_str_or_dash(rep.c1_witness)}")
        lines.append(f"c2 {fmt(rep.c2)} witness {_str_or_dash(rep.c2_witness)}")
    if diag_sum > 1 + 1e-9 or violations:
        raise BoundViolation("\n".join(lines))
    return lines


def cmd_bundle(args) -> list[str]:
    """Full pipeline into an output directory with a hash manifest."""
    from . import __version__
    from .machines import CORPUS_MACHINES, corpus_path, load_corpus_machine

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stages: list[tuple[str, list[str]]] = []

    for name in CORPUS_MACHINES:
        a = argparse.Namespace(machine=corpus_path(name), window=None)
        stages.append((f"validate_{name}", cmd_validate(a)))

    for name in ("id1", "branch1", "mz1", "nohalt1"):
        for k in (1, 2):
            a = argparse.Namespace(
                machine=corpus_path(name), k=k, t_max=16, window=None
            )
            stages.append((f"halting_{name}_k{k}", cmd_halting_spaces(a)))

    for name in ("id1", "branch1"):
        a = argparse.Namespace(
            machine=corpus_path(name),
            k=1,
            t=2,
            delta="1/8",
            window=None,
            cert=True,
            samples=args.samples,
            seed=args.seed,
        )
        stages.append((f"approx_{name}_k1_t2", cmd_approx(a)))

    for name in ("id1", "copy1", "branch1", "mz1", "tri1"):
        for k in (1, 2):
            a = argparse.Namespace(
                machine=corpus_path(name), k=k, t_max=16, ell_max=None, window=None
            )
            stages.append((f"coverage_{name}_k{k}", cmd_coverage(a)))

    a = argparse.Namespace(
        corpus=corpus_path("corpus4.txt"),
        classical=corpus_path("rm_plain1.tm"),
        quantum=corpus_path("copy1.qtm"),
        dict="basic",
        k_max=4,
        t_max=16,
    )
    stages.append(("gap_copy1", cmd_gap(a)))

    a = argparse.Namespace(
        mix=corpus_path("mix1.txt"), steps=None, check_domination=True, m_len=4
    )
    stages.append(("nu_mix1", cmd_nu(a)))

    manifest = [
        f"bundle-version {__version__}",
        f"seed {args.seed}",
        f"threads {os.environ.get('OMP_NUM_THREADS', '1')}",
        "tolerance 1e-09",
    ]
    for stage_name, lines in stages:
        body = "\n".join(lines) + "\n"
        path = out / f"{stage_name}.txt"
        path.write_text(body, encoding="utf-8")
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        manifest.append(f"file {stage_name}.txt sha256 {digest}")
    (out / "MANIFEST").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    return [f"bundle {out}", f"stages {len(stages)}", "status complete"]


# -- argument plumbing ---------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qtmlab",
        description="Small quantum Turing machines: evolution, halting, "
        "finite-precision channels, coverage decoding, toy complexity.",
    )
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS/OpenMP thread count (QTM_THREADS overrides; default 1)")
    sub = p.add_subparsers(dest="command", required=True)

    def add_machine(sp):
        # accepted before or after the subcommand; consumed by _pin_threads
        sp.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
        sp.add_argument("--machine", required=True, help="machine definition file")
        sp.add_argument("--window", type=int, default=None)

    def add_tmax(sp):
        sp.add_argument("--tmax", "--t-max", dest="t_max", type=int, default=16)

    sp = sub.add_parser("validate", help="parse and well-formedness check")
    add_machine(sp)

    sp = sub.add_parser("evolve", help="halting profile and output for one input")
    add_machine(sp)
    sp.add_argument("--input", required=True, help="bit string program ('-' for empty)")
    add_tmax(sp)
    sp.add_argument("--eta", type=float, default=None)

    sp = sub.add_parser("halting-spaces", help="enumerate halting subspaces")
    add_machine(sp)
    sp.add_argument("--k", type=int, required=True)
    add_tmax(sp)

    sp = sub.add_parser("approx", help="finite-precision channel certificate")
    add_machine(sp)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--t", type=int, required=True)
    sp.add_argument("--delta", default="1/8", help="rational error budget, e.g. 1/8")
    sp.add_argument("--cert", action="store_true",
                    help="measure the per-step and final error certificate")
    sp.add_argument("--samples", type=int, default=20)
    sp.add_argument("--seed", type=int, default=7)

    sp = sub.add_parser("coverage", help="covered classical strings table")
    add_machine(sp)
    sp.add_argument("--k", type=int, required=True)
    add_tmax(sp)
    sp.add_argument("--ell-max", type=int, default=None)

    sp = sub.add_parser("decode", help="b-th covered string")
    add_machine(sp)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--b", type=int, required=True)
    add_tmax(sp)

    sp = sub.add_parser("complexity", help="C and Hbvl for one string")
    sp.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    sp.add_argument("--x", required=True, help="target bit string ('-' for empty)")
    sp.add_argument("--classical", required=True, help="reference machine file")
    sp.add_argument("--quantum", required=True, help="machine definition file")
    sp.add_argument("--dict", default="basic")
    sp.add_argument("--k-max", type=int, default=4)
    add_tmax(sp)

    sp = sub.add_parser("gap", help="gap report over a corpus")
    sp.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--classical", required=True)
    sp.add_argument("--quantum", required=True)
    sp.add_argument("--dict", default="basic")
    sp.add_argument("--k-max", type=int, default=4)
    add_tmax(sp)

    sp = sub.add_parser("nu", help="mixture accumulation and domination")
    sp.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    sp.add_argument("--mix", required=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--check-domination", action="store_true")
    sp.add_argument("--m-len", type=int, default=None,
                    help="sandwich against the prefix semi-measure up to this length")

    sp = sub.add_parser("bundle", help="full deterministic report bundle")
    sp.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int, default=10)
    sp.add_argument("--seed", type=int, default=7)

    return p


_COMMANDS = {
    "validate": cmd_validate,
    "evolve": cmd_evolve,
    "halting-spaces": cmd_halting_spaces,
    "approx": cmd_approx,
    "coverage": cmd_coverage,
    "decode": cmd_decode,
    "complexity": cmd_complexity,
    "gap": cmd_gap,
    "nu": cmd_nu,
    "bundle": cmd_bundle,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    _pin_threads(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PARSE if e.code not in (0, None) else 0

    from .exactnum import AmplitudeSyntaxError
    from .machines import MachineSyntaxError, MachineValidationError

    try:
        lines = _COMMANDS[args.command](args)
    except BoundViolation as e:
        print(str(e))
        return EXIT_BOUND
    except (MachineSyntaxError, AmplitudeSyntaxError) as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except Exception as e:
        from .mixture import MixtureSyntaxError

        if isinstance(e, MixtureSyntaxError):
            print(f"parse error: {e}", file=sys.stderr)
            return EXIT_PARSE
        from .channel import ChannelError
        from .decoder import CoverageBoundError, DecodeError
        from .halting import HaltingSpaceError

        if isinstance(e, (CoverageBoundError, HaltingSpaceError, ChannelError)):
            print(f"bound violation: {e}", file=sys.stderr)
            return EXIT_BOUND
        if isinstance(e, (MachineValidationError, DecodeError, ValueError, OSError)):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_VALIDATION
        raise
    print("\n".join(lines))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
