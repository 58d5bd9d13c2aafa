"""Toy plain/prefix complexity, quantum program search, and the gap
experiment comparing the two on a shipped machine pair.

Every complexity here is a budgeted exhaustive search over a fixed toy
reference machine, so values are upper bounds that are exact whenever the
sweep provably covers a witness; results carry an `exact` flag and reports
distinguish the two.  The headline quantities for a truly universal machine
are uncomputable and out of scope.

The quantum complexity of a classical string x against a machine M is the
least qubit length k of a dictionary program sigma such that M halts on
sigma and the output is within trace distance eps of |x><x|.  Comparisons
use D < eps + eps_num so that eps = 1 accepts any halting program at the
boundary.  The dictionary is finite and declared: classical basis states,
uniform two-basis superpositions, and any user-supplied entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import build_channel
from .decoder import coverage_table
from .evolution import IndeterminateState, run_machine
from .halting import enumerate_projections
from .machines import ConfigSpace, QTMDef
from .operators import EPS_NUM, Operator, ind_dim, ind_index, psd_leq

DEFAULT_T_MAX = 16
DEFAULT_K_MAX = 4


class ReferenceMachineError(ValueError):
    pass


def bin_str(n: int) -> str:
    """Binary encoding of a nonnegative integer; 0 encodes as the empty string."""
    if n < 0:
        raise ValueError("negative integer")
    return format(n, "b") if n else ""


# -- classical toy machines ---------------------------------------------------


class ReferenceMachine:
    """Classical toy machine: a total function program-string -> output or None.

    kind "classical-prefix" promises a prefix-free halting domain; the
    promise is spot-checked by domain_prefix_free over a length budget.
    """

    def __init__(self, name: str, kind: str, run: Callable[[str], Optional[str]],
                 step_budget: int = 10**6):
        if kind not in ("classical-plain", "classical-prefix"):
            raise ReferenceMachineError(f"unknown kind {kind!r}")
        self.name = name
        self.kind = kind
        self._run = run
        self.step_budget = step_budget

    def run(self, program: str) -> Optional[str]:
        return self._run(program)

    def domain_prefix_free(self, max_len: int = 9) -> bool:
        halting = [p for p in _programs_upto(max_len) if self._run(p) is not None]
        halting.sort(key=len)
        for i, p in enumerate(halting):
            for q in halting[i + 1 :]:
                if len(q) > len(p) and q.startswith(p):
                    return False
        return True


def _programs_of_len(n: int):
    for v in range(1 << n):
        yield format(v, f"0{n}b") if n else ""


def _programs_upto(max_len: int):
    for n in range(max_len + 1):
        yield from _programs_of_len(n)


def _run_plain_v1(p: str) -> Optional[str]:
    # "" -> empty output; 0s -> s; 10d -> dddd; 11s -> ss
    if p == "":
        return ""
    if p[0] == "0":
        return p[1:]
    if p.startswith("10"):
        rest = p[2:]
        return rest * 4 if len(rest) == 1 else None
    if p.startswith("11"):
        return p[2:] * 2
    return None


def _run_prefix_unary(p: str) -> Optional[str]:
    # 1^a 0 w with |w| = a exactly; everything else is outside the domain
    a = 0
    while a < len(p) and p[a] == "1":
        a += 1
    if a >= len(p):
        return None
    body = p[a + 1 :]
    return body if len(body) == a else None


def _run_identity_print(p: str) -> Optional[str]:
    return p


BUILTIN_MACHINES = {
    "plain-v1": lambda: ReferenceMachine("plain-v1", "classical-plain", _run_plain_v1),
    "prefix-unary": lambda: ReferenceMachine(
        "prefix-unary", "classical-prefix", _run_prefix_unary
    ),
    "identity-print": lambda: ReferenceMachine(
        "identity-print", "classical-plain", _run_identity_print
    ),
}


def load_reference(path) -> ReferenceMachine:
    """Reference-machine files: `refmachine <kind>`, then either
    `builtin <name>` or explicit `map <program> <output>` lines
    (programs/outputs as bit strings, `-` for the empty string),
    plus optional `budget <n>`."""
    text = open(path, "r", encoding="utf-8").read()
    kind = None
    builtin = None
    table: dict[str, str] = {}
    budget = 10**6
    name = str(path)
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        parts = line.split()
        head = parts[0]
        if head == "refmachine" and len(parts) == 2:
            kind = parts[1]
        elif head == "builtin" and len(parts) == 2:
            builtin = parts[1]
        elif head == "budget" and len(parts) == 2:
            budget = int(parts[1])
        elif head == "map" and len(parts) == 3:
            prog = "" if parts[1] == "-" else parts[1]
            outp = "" if parts[2] == "-" else parts[2]
            table[prog] = outp
        else:
            raise ReferenceMachineError(f"line {ln}: cannot parse {line!r}")
    if builtin is not None:
        if builtin not in BUILTIN_MACHINES:
            raise ReferenceMachineError(f"unknown builtin {builtin!r}")
        rm = BUILTIN_MACHINES[builtin]()
        if kind is not None and kind != rm.kind:
            raise ReferenceMachineError(
                f"declared kind {kind!r} does not match builtin kind {rm.kind!r}"
            )
        rm.step_budget = budget
        return rm
    if kind is None:
        raise ReferenceMachineError("missing refmachine line")
    return ReferenceMachine(name, kind, lambda p: table.get(p), step_budget=budget)


@dataclass
class SearchResult:
    value: Optional[int]  # None: no witness within budget
    exact: bool  # budget provably covered a witness
    l_max: int
    witness: Optional[str]

    @property
    def display(self) -> str:
        if self.value is None:
            return f">{self.l_max}"
        return str(self.value)


def plain_complexity(x: str, rm: ReferenceMachine, l_max: Optional[int] = None) -> SearchResult:
    """Length of the shortest program producing x, swept in (length, lex) order."""
    l_max = len(x) + 2 if l_max is None else int(l_max)
    for n in range(l_max + 1):
        for p in _programs_of_len(n):
            if rm.run(p) == x:
                return SearchResult(value=n, exact=True, l_max=l_max, witness=p)
    return SearchResult(value=None, exact=False, l_max=l_max, witness=None)


def prefix_complexity(x: str, rm: ReferenceMachine, l_max: Optional[int] = None) -> SearchResult:
    if rm.kind != "classical-prefix":
        raise ReferenceMachineError(f"{rm.name} is not a prefix machine")
    l_max = 2 * len(x) + 3 if l_max is None else int(l_max)
    return plain_complexity(x, rm, l_max=l_max)


def toy_m(x: str, rm: ReferenceMachine, l_max: Optional[int] = None) -> Fraction:
    """sum of 2^-|p| over halting programs producing x, within the length budget."""
    l_max = 2 * len(x) + 3 if l_max is None else int(l_max)
    total = Fraction(0)
    for n in range(l_max + 1):
        for p in _programs_of_len(n):
            if rm.run(p) == x:
                total += Fraction(1, 2**n)
    return total


def toy_k_int(n: int, rm: ReferenceMachine) -> int:
    res = prefix_complexity(bin_str(n), rm)
    if res.value is None:
        raise ReferenceMachineError(f"prefix machine never prints {bin_str(n)!r}")
    return res.value


# -- quantum program dictionary -----------------------------------------------


@dataclass
class DictEntry:
    name: str
    k: int  # qubit length of the program
    sigma: Operator


def classical_dictionary(
    k_max: int = DEFAULT_K_MAX, extra: Sequence[DictEntry] = ()
) -> list[DictEntry]:
    """Basis states and uniform two-basis superpositions for every k <= k_max."""
    out: list[DictEntry] = []
    for k in range(k_max + 1):
        n = 1 << k
        for b in range(n):
            v = np.zeros(n, dtype=np.complex128)
            v[b] = 1.0
            bits = format(b, f"0{k}b") if k else "-"
            out.append(
                DictEntry(
                    name=f"basis:{bits}",
                    k=k,
                    sigma=Operator(np.outer(v, v.conj()), hermitian=True, psd=True),
                )
            )
        for a in range(n):
            for b in range(a + 1, n):
                v = np.zeros(n, dtype=np.complex128)
                v[a] = v[b] = 1.0 / math.sqrt(2)
                out.append(
                    DictEntry(
                        name=f"super:{format(a, f'0{k}b')},{format(b, f'0{k}b')}",
                        k=k,
                        sigma=Operator(np.outer(v, v.conj()), hermitian=True, psd=True),
                    )
                )
    out.extend(extra)
    out.sort(key=lambda e: (e.k, e.name))
    return out


_RUN_CACHE: dict = {}


def run_entry(
    qtm: QTMDef,
    entry: DictEntry,
    t_max: int = DEFAULT_T_MAX,
    window: Optional[int] = None,
    aux: Optional[str] = None,
):
    """Cached (profile, output IndeterminateState or None) for one program.

    aux is the classical side parameter; machines with fewer than three
    tapes ignore it physically, so it only keys the cache."""
    w = window if window is not None else qtm.window
    key = (qtm, w, entry.name, t_max, aux if qtm.tapes >= 3 else None)
    if key in _RUN_CACHE:
        return _RUN_CACHE[key]
    cs = ConfigSpace(qtm, w)
    profile, output = run_machine(cs, entry.sigma, t_max=t_max)
    _RUN_CACHE[key] = (profile, output)
    return profile, output


def _target_state(x: str) -> IndeterminateState:
    v = np.zeros(ind_dim(len(x)), dtype=np.complex128)
    v[ind_index(x)] = 1.0
    return IndeterminateState(len(x), [(1.0, v)])


@dataclass
class HbvlResult:
    value: Optional[int]
    witness: Optional[str]
    distance: Optional[float]
    eps: float
    k_max_swept: int
    aux_mode: str  # "tape" or "config"

    @property
    def display(self) -> str:
        return str(self.value) if self.value is not None else "absent"


def hbvl_eps(
    x: str,
    qtm: QTMDef,
    eps,
    dictionary: Sequence[DictEntry],
    t_max: int = DEFAULT_T_MAX,
    window: Optional[int] = None,
    aux: Optional[str] = None,
) -> HbvlResult:
    """min k over dictionary programs whose halting output is within eps of |x><x|."""
    if not dictionary:
        raise ValueError("empty dictionary")
    eps_f = float(Fraction(eps)) if not isinstance(eps, float) else eps
    target = _target_state(x)
    aux_mode = "tape" if qtm.tapes >= 3 else "config"
    best_k = max(e.k for e in dictionary)
    for entry in sorted(dictionary, key=lambda e: (e.k, e.name)):
        profile, output = run_entry(qtm, entry, t_max=t_max, window=window, aux=aux)
        if not profile.halted or output is None:
            continue
        d = output.distance(target)
        if d < eps_f + EPS_NUM:
            return HbvlResult(
                value=entry.k,
                witness=entry.name,
                distance=d,
                eps=eps_f,
                k_max_swept=best_k,
                aux_mode=aux_mode,
            )
    return HbvlResult(
        value=None, witness=None, distance=None, eps=eps_f,
        k_max_swept=best_k, aux_mode=aux_mode,
    )


def hbvl(
    x: str,
    qtm: QTMDef,
    dictionary: Sequence[DictEntry],
    k_max: int = DEFAULT_K_MAX,
    t_max: int = DEFAULT_T_MAX,
    window: Optional[int] = None,
) -> HbvlResult:
    """min k such that for every accuracy index kk <= k_max the (sigma, kk)
    run lands within 1/kk of the target; k_max stands in for the unbounded
    quantifier and is reported."""
    if not dictionary:
        raise ValueError("empty dictionary")
    target = _target_state(x)
    aux_mode = "tape" if qtm.tapes >= 3 else "config"
    for entry in sorted(dictionary, key=lambda e: (e.k, e.name)):
        ok = True
        worst = 0.0
        for kk in range(1, k_max + 1):
            profile, output = run_entry(
                qtm, entry, t_max=t_max, window=window, aux=bin_str(kk)
            )
            if not profile.halted or output is None:
                ok = False
                break
            d = output.distance(target)
            worst = max(worst, d)
            if not d < 1.0 / kk + EPS_NUM:
                ok = False
                break
        if ok:
            return HbvlResult(
                value=entry.k,
                witness=entry.name,
                distance=worst,
                eps=1.0 / k_max,
                k_max_swept=k_max,
                aux_mode=aux_mode,
            )
    return HbvlResult(
        value=None, witness=None, distance=None, eps=1.0 / k_max,
        k_max_swept=k_max, aux_mode=aux_mode,
    )


# -- the gap experiment -------------------------------------------------------


@dataclass
class ComplexityReport:
    x: str
    c_plain: SearchResult
    hbvl_eps_map: dict  # float eps -> Optional[int]
    hbvl: HbvlResult

    @property
    def gap(self) -> Optional[int]:
        if self.c_plain.value is None or self.hbvl.value is None:
            return None
        return abs(self.c_plain.value - self.hbvl.value)


@dataclass
class GapReport:
    rows: list[ComplexityReport]
    max_gap: int
    c_sim: int  # max over corpus of hbvl - c_plain (clamped at 0)
    k_max: int
    warnings: list[str]

    def lines(self) -> list[str]:
        out = []
        for r in self.rows:
            label = r.x if r.x else "-"
            gap = r.gap if r.gap is not None else "?"
            out.append(
                f"x {label} C {r.c_plain.display} Hbvl {r.hbvl.display} gap {gap}"
            )
        out.append(f"max-gap {self.max_gap}")
        return out


def mueller_gap(
    corpus: Sequence[str],
    rm: ReferenceMachine,
    qtm: QTMDef,
    dictionary: Sequence[DictEntry],
    k_max: int = DEFAULT_K_MAX,
    t_max: int = DEFAULT_T_MAX,
    window: Optional[int] = None,
) -> GapReport:
    rows = []
    warnings = []
    max_gap = 0
    c_sim = 0
    for x in corpus:
        c = plain_complexity(x, rm)
        eps_map = {}
        for kk in range(1, k_max + 1):
            r = hbvl_eps(x, qtm, Fraction(1, kk), dictionary, t_max=t_max, window=window)
            eps_map[1.0 / kk] = r.value
        h = hbvl(x, qtm, dictionary, k_max=k_max, t_max=t_max, window=window)
        row = ComplexityReport(x=x, c_plain=c, hbvl_eps_map=eps_map, hbvl=h)
        rows.append(row)
        if row.gap is None:
            warnings.append(
                f"string {x or '-'}: inconclusive search (C {c.display}, Hbvl {h.display})"
            )
        else:
            max_gap = max(max_gap, row.gap)
            if h.value is not None and c.value is not None:
                c_sim = max(c_sim, h.value - c.value)
    return GapReport(rows=rows, max_gap=max_gap, c_sim=c_sim, k_max=k_max, warnings=warnings)


def load_corpus(path) -> list[str]:
    out = []
    for raw in open(path, "r", encoding="utf-8").read().splitlines():
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        out.append("" if line == "-" else line)
    return out


def coverage_cross_check(
    qtm: QTMDef,
    rm: ReferenceMachine,
    ks: Sequence[int] = (1, 2, 3),
    t_max: int = DEFAULT_T_MAX,
    window: Optional[int] = None,
):
    """plain_complexity(y) <= k + c_dec over every coverage row; returns
    (c_dec, details).  c_dec is the one constant making the bound tight."""
    c_dec = 0
    details = []
    for k in ks:
        table = coverage_table(qtm, k, t_max=t_max, window=window)
        for row in table.rows:
            c = plain_complexity(row.y, rm)
            if c.value is None:
                raise ReferenceMachineError(
                    f"reference machine cannot print covered string {row.y!r}"
                )
            c_dec = max(c_dec, c.value - k)
            details.append((k, row.y, c.value))
    return c_dec, details


# -- proposition-2 style calibration ------------------------------------------


@dataclass
class Prop2Result:
    holds: bool
    const: float
    required: float
    witness: Optional[tuple]


def prop2_scan(
    rm: ReferenceMachine,
    a_max: int = 64,
    c_max: int = 8,
    samples: Optional[Sequence[tuple]] = None,
):
    """Worst slack of a + K(a) < b + K(b) + 2 log2(c) + const over the grid."""
    kcache = {n: toy_k_int(n, rm) for n in range(a_max + 1)}
    worst = -math.inf
    witness = None
    if samples is None:
        samples = [
            (a, b, c)
            for a in range(a_max + 1)
            for b in range(a_max + 1)
            for c in range(1, c_max + 1)
        ]
    for a, b, c in samples:
        if not a < b + c:
            continue
        slack = (a + kcache[a]) - (b + kcache[b] + 2 * math.log2(c))
        if slack > worst:
            worst = slack
            witness = (a, b, c)
    return worst, witness


def prop2_check(
    rm: ReferenceMachine,
    const: float,
    a_max: int = 64,
    c_max: int = 8,
    samples: Optional[Sequence[tuple]] = None,
) -> Prop2Result:
    worst, witness = prop2_scan(rm, a_max=a_max, c_max=c_max, samples=samples)
    holds = worst < const
    return Prop2Result(
        holds=holds,
        const=const,
        required=worst,
        witness=None if holds else witness,
    )


def prop2_calibrate(rm: ReferenceMachine, a_max: int = 64, c_max: int = 8) -> int:
    worst, _ = prop2_scan(rm, a_max=a_max, c_max=c_max)
    return math.floor(worst) + 1


# -- the six-step chain -------------------------------------------------------


@dataclass
class ChainStep:
    name: str
    required_c: float  # minimal additive constant (log2 scale) for this step

    def holds_with(self, c3: float, tol: float = 1e-9) -> bool:
        return self.required_c <= c3 + tol


@dataclass
class Lemma3Row:
    x: str
    k: int
    s: int  # halting time of the witness
    steps: list[ChainStep]


@dataclass
class Lemma3Report:
    eps: Fraction
    c3: float  # max required constant over corpus and steps
    rows: list[Lemma3Row]
    enrolled_weights: dict
    k_levels: list[int]

    def holds_with(self, c3: float) -> bool:
        return all(s.holds_with(c3) for r in self.rows for s in r.steps)


def _min_psd_constant(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> float:
    """Least C with a <= C b (PSD order); inf if support(a) escapes support(b)."""
    bh = (b + b.conj().T) / 2
    vals, vecs = np.linalg.eigh(bh)
    keep = vals > tol * max(1.0, float(vals.max(initial=0.0)))
    if not np.any(keep):
        return 0.0 if np.allclose(a, 0, atol=1e-12) else math.inf
    # mass of a outside the support of b
    perp = vecs[:, ~keep]
    if perp.size and float(np.max(np.abs(perp.conj().T @ a @ perp))) > 1e-10:
        return math.inf
    inv_half = vecs[:, keep] @ np.diag(vals[keep] ** -0.5) @ vecs[:, keep].conj().T
    m = inv_half @ ((a + a.conj().T) / 2) @ inv_half
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2).max(initial=0.0))


def lemma3_chain(
    corpus: Sequence[str],
    qtm: QTMDef,
    rm_prefix: ReferenceMachine,
    dictionary: Sequence[DictEntry],
    eps: Fraction = Fraction(1, 3),
    k_levels: Sequence[int] = tuple(range(DEFAULT_K_MAX + 1)),
    t_max: int = DEFAULT_T_MAX,
    window: Optional[int] = None,
) -> Lemma3Report:
    """Assert the six displayed inequality steps of the prefix-complexity
    chain at accuracy eps, with one additive constant c3 (log2 scale)
    covering every step on every corpus string.

    The mixture enrolls, for each level k, the operator
    nu_k = 2^-k sum_j Psi^{t(j),eps}(P_j) with weight 2^-(k+2), plus the
    diagonal semi-measure program with weight 1/2."""
    w = window if window is not None else qtm.window
    max_len = w
    dim = ind_dim(max_len)

    # nu_k operators and the big mixture
    nu_k_ops: dict[int, np.ndarray] = {}
    spaces_by_k: dict[int, list] = {}
    for k in k_levels:
        dec = enumerate_projections(qtm, k, t_max, window=w)
        spaces_by_k[k] = dec.spaces
        acc = np.zeros((dim, dim), dtype=np.complex128)
        for space in dec.spaces:
            ch = build_channel(qtm, k, space.t, eps, window=w)
            img = ch.apply(space.projection, max_len=max_len)
            acc += img.to_operator().to_dense()
        nu_k_ops[k] = acc * (2.0 ** -k)

    weights = {f"nu_{k}": 2.0 ** -(k + 2) for k in k_levels}
    weights["diag_m"] = 0.5
    diag_m = np.zeros((dim, dim), dtype=np.complex128)
    for ell in range(max_len + 1):
        for v in range(1 << ell):
            y = format(v, f"0{ell}b") if ell else ""
            idx = ind_index(y)
            diag_m[idx, idx] = float(Fraction(1, 2 ** (2 * ell + 1)))
    big_nu = weights["diag_m"] * diag_m
    for k in k_levels:
        big_nu = big_nu + weights[f"nu_{k}"] * nu_k_ops[k]

    one_minus_2eps = float(1 - 2 * eps)
    if one_minus_2eps <= 0:
        raise ValueError("eps must be < 1/2 for the chain")

    rows = []
    for x in corpus:
        res = hbvl_eps(x, qtm, eps, dictionary, t_max=t_max, window=w)
        if res.value is None:
            raise ValueError(f"no witness for {x!r} at eps={eps}")
        k = res.value
        entry = next(e for e in dictionary if e.name == res.witness and e.k == k)
        profile, _ = run_entry(qtm, entry, t_max=t_max, window=w)
        s = profile.t
        space = next(sp for sp in spaces_by_k[k] if sp.t == s)
        ch = build_channel(qtm, k, s, eps, window=w)
        xi = ch.apply(entry.sigma, max_len=max_len).to_operator().to_dense()
        psi_pi = ch.apply(space.projection, max_len=max_len).to_operator().to_dense()

        m_pair = float(Fraction(1, 2 ** (2 * len(bin_str(k)) + 1)))
        m_x = float(Fraction(1, 2 ** (2 * len(x) + 1)))
        scale = m_pair * (2.0 ** -k)
        x_idx = ind_index(x)
        xi_xx = float(np.real(xi[x_idx, x_idx]))
        nu_xx = float(np.real(big_nu[x_idx, x_idx]))
        k_x = 2 * len(x) + 1
        k_pair = 2 * len(bin_str(k)) + 1

        def logc(c: float) -> float:
            return math.log2(c) if c > 0 else -math.inf

        steps = [
            ChainStep("nu_k_dominated", logc(_min_psd_constant(m_pair * nu_k_ops[k], big_nu))),
            ChainStep(
                "single_projection_dominated",
                logc(_min_psd_constant(scale * psi_pi, big_nu)),
            ),
            ChainStep("witness_dominated", logc(_min_psd_constant(scale * xi, big_nu))),
            ChainStep("diagonal_entry", logc(scale * xi_xx / nu_xx) if nu_xx > 0 else math.inf),
            ChainStep("semi_measure_bound", logc(scale * one_minus_2eps / m_x)),
            ChainStep(
                "prefix_complexity_bound",
                k_x - (k + k_pair - math.log2(one_minus_2eps)),
            ),
        ]
        if not xi_xx > 1 - 2 * float(eps):
            raise ValueError(
                f"fidelity premise failed for {x!r}: <x|xi|x> = {xi_xx:.6f} "
                f"<= 1 - 2 eps = {1 - 2 * float(eps):.6f}"
            )
        rows.append(Lemma3Row(x=x, k=k, s=s, steps=steps))

    c3 = max(s.required_c for r in rows for s in r.steps)
    return Lemma3Report(
        eps=eps, c3=c3, rows=rows, enrolled_weights=weights, k_levels=list(k_levels)
    )
