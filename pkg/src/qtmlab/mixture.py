"""Lower-computable semi-density streams and a finite declared mixture.

A stream is an ordered list of (weight, elementary pure state) terms; its
partial sums form a nondecreasing (PSD order) operator sequence over the
indeterminate-length space, and "limit" means the final partial sum.  The
mixture nu is a finite weighted collection of streams; universality is not
claimed — domination is verified for the enrolled members only, and the
member weight is reported as the observable lower bound on the member's
algorithmic weight.

Mixture files:

    program <name> [<weight p/q>]     // weight defaults to 2^-(index+1)
    term <p/q> <n> <re> <im> ... (2^n amplitude pairs, rational tokens)

Amplitudes must form a unit vector in Q_n.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exactnum import AmplitudeSyntaxError, ExactComplex, parse_rational_token
from .operators import EPS_NUM, Operator, ind_dim, ind_offset, psd_leq

__all__ = [
    "StreamTerm",
    "LowerComputation",
    "ToyUniversalMixture",
    "MonotonicityError",
    "TraceOverflowError",
    "MixtureSyntaxError",
    "parse_mixture",
    "load_mixture",
    "accumulate",
    "build_nu",
    "domination_report",
    "diagonal_vs_m",
]


class MixtureSyntaxError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class MonotonicityError(ValueError):
    def __init__(self, index: int, weight: Fraction):
        super().__init__(
            f"term {index}: weight {weight} < 0 breaks monotonicity of partial sums"
        )
        self.index = index


class TraceOverflowError(ValueError):
    def __init__(self, index: int, trace: float):
        super().__init__(f"term {index}: partial trace {trace:.12f} exceeds 1")
        self.index = index


@dataclass
class StreamTerm:
    weight: Fraction
    n: int  # qubit length of the state
    coeffs: list  # 2^n ExactComplex amplitudes
    line: Optional[int] = None

    def vector(self, max_len: int) -> np.ndarray:
        v = np.zeros(ind_dim(max_len), dtype=np.complex128)
        off = ind_offset(self.n)
        for i, c in enumerate(self.coeffs):
            v[off + i] = c.shadow
        return v


@dataclass
class LowerComputation:
    name: str
    terms: list[StreamTerm]

    @property
    def max_n(self) -> int:
        return max((t.n for t in self.terms), default=0)

    def total_weight(self) -> Fraction:
        return sum((t.weight for t in self.terms), Fraction(0))


@dataclass
class ToyUniversalMixture:
    programs: list[tuple[Fraction, LowerComputation]]

    @property
    def max_n(self) -> int:
        return max((lc.max_n for _, lc in self.programs), default=0)

    def weight_of(self, name: str) -> Fraction:
        for w, lc in self.programs:
            if lc.name == name:
                return w
        raise KeyError(name)


def _check_unit(term: StreamTerm, where: Optional[int]) -> None:
    total = Fraction(0)
    for c in term.coeffs:
        total += c.abs2()
    if total != 1 and abs(float(total) - 1.0) > EPS_NUM:
        raise MixtureSyntaxError(
            f"state norm^2 = {float(total):.12f}, expected 1", where
        )


def parse_mixture(text: str) -> ToyUniversalMixture:
    programs: list[tuple[Optional[Fraction], LowerComputation]] = []
    current: Optional[LowerComputation] = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        parts = line.split()
        if parts[0] == "program":
            if len(parts) not in (2, 3):
                raise MixtureSyntaxError("expected `program <name> [<weight>]`", ln)
            weight = None
            if len(parts) == 3:
                try:
                    weight, _ = parse_rational_token(parts[2])
                except AmplitudeSyntaxError as e:
                    raise MixtureSyntaxError(str(e), ln)
            current = LowerComputation(name=parts[1], terms=[])
            programs.append((weight, current))
        elif parts[0] == "term":
            if current is None:
                raise MixtureSyntaxError("term before any program line", ln)
            if len(parts) < 3:
                raise MixtureSyntaxError("expected `term <weight> <n> <coeffs...>`", ln)
            try:
                weight, _ = parse_rational_token(parts[1])
            except AmplitudeSyntaxError as e:
                raise MixtureSyntaxError(str(e), ln)
            try:
                n = int(parts[2])
            except ValueError:
                raise MixtureSyntaxError(f"bad qubit length {parts[2]!r}", ln)
            if n < 0 or n > 12:
                raise MixtureSyntaxError(f"qubit length {n} out of range 0..12", ln)
            tokens = parts[3:]
            if len(tokens) != 2 * (1 << n):
                raise MixtureSyntaxError(
                    f"expected {2 * (1 << n)} amplitude tokens for n={n}, got {len(tokens)}",
                    ln,
                )
            coeffs = []
            for i in range(1 << n):
                try:
                    re, _ = parse_rational_token(tokens[2 * i])
                    im, _ = parse_rational_token(tokens[2 * i + 1])
                except AmplitudeSyntaxError as e:
                    raise MixtureSyntaxError(str(e), ln)
                coeffs.append(ExactComplex(re, im))
            term = StreamTerm(weight=weight, n=n, coeffs=coeffs, line=ln)
            _check_unit(term, ln)
            current.terms.append(term)
        else:
            raise MixtureSyntaxError(f"cannot parse {line!r}", ln)
    if not programs:
        raise MixtureSyntaxError("empty mixture")
    resolved: list[tuple[Fraction, LowerComputation]] = []
    total = Fraction(0)
    for i, (w, lc) in enumerate(programs):
        weight = w if w is not None else Fraction(1, 2 ** (i + 1))
        if weight < 0:
            raise MixtureSyntaxError(f"program {lc.name!r} has negative weight")
        total += weight
        resolved.append((weight, lc))
    if total > 1:
        raise MixtureSyntaxError(f"program weights sum to {total} > 1")
    return ToyUniversalMixture(programs=resolved)


def load_mixture(path) -> ToyUniversalMixture:
    return parse_mixture(open(path, "r", encoding="utf-8").read())


def accumulate(
    lc: LowerComputation,
    steps: Optional[int] = None,
    max_len: Optional[int] = None,
    tol: float = EPS_NUM,
) -> Operator:
    """Partial sum sigma_steps; monotonicity and the trace bound are
    enforced term by term (1-based indices in errors)."""
    n_terms = len(lc.terms) if steps is None else min(steps, len(lc.terms))
    max_len = lc.max_n if max_len is None else max_len
    dim = ind_dim(max_len)
    acc = np.zeros((dim, dim), dtype=np.complex128)
    trace = Fraction(0)
    for i, term in enumerate(lc.terms[:n_terms], start=1):
        if term.weight < 0:
            raise MonotonicityError(i, term.weight)
        v = term.vector(max_len)
        acc += float(term.weight) * np.outer(v, v.conj())
        trace += term.weight  # unit vectors: each term adds exactly its weight
        if float(trace) > 1 + tol:
            raise TraceOverflowError(i, float(trace))
    return Operator(acc, hermitian=True, psd=True)


def tail_weight(lc: LowerComputation, steps: int) -> Fraction:
    """Weight left beyond the evaluated prefix (convergence diagnostic)."""
    return sum((t.weight for t in lc.terms[steps:]), Fraction(0))


def build_nu(
    mix: ToyUniversalMixture,
    steps: Optional[int] = None,
    max_len: Optional[int] = None,
    tol: float = EPS_NUM,
) -> Operator:
    max_len = mix.max_n if max_len is None else max_len
    dim = ind_dim(max_len)
    acc = np.zeros((dim, dim), dtype=np.complex128)
    for w, lc in mix.programs:
        acc += float(w) * accumulate(lc, steps, max_len=max_len, tol=tol).to_dense()
    nu = Operator(acc, hermitian=True, psd=True)
    tr = float(np.real(nu.trace()))
    if tr > 1 + tol:
        raise TraceOverflowError(len(mix.programs), tr)
    return nu


def domination_report(
    mix: ToyUniversalMixture,
    steps: Optional[int] = None,
    tol: float = EPS_NUM,
) -> list[dict]:
    """psd_leq(w_p * sigma_p, nu) for every enrolled program, at every
    requested step count; the enrolled weight doubles as the observable
    lower bound on the member's algorithmic weight."""
    max_len = mix.max_n
    nu = build_nu(mix, steps, max_len=max_len, tol=tol)
    out = []
    for w, lc in mix.programs:
        sigma = accumulate(lc, steps, max_len=max_len, tol=tol)
        ok = psd_leq(sigma.scale(float(w)), nu, tol=tol)
        out.append(
            {
                "name": lc.name,
                "weight": w,
                "dominated": ok,
                "ml_lower_bound": w,
                "tail_weight": tail_weight(lc, steps if steps is not None else len(lc.terms)),
            }
        )
    return out


@dataclass
class DiagReport:
    c1: float
    c2: float
    c1_witness: str
    c2_witness: str
    diagonal_sum: float
    m_sum: Fraction


def diagonal_vs_m(
    mix: ToyUniversalMixture,
    toy_m_map: dict[str, Fraction],
    steps: Optional[int] = None,
    tol: float = EPS_NUM,
) -> DiagReport:
    """Sandwich constants c1, c2 with c1 m(x) <= <x|nu|x> <= c2 m(x) over the
    given semi-measure table."""
    m_sum = sum(toy_m_map.values(), Fraction(0))
    if m_sum > 1:
        raise ValueError(f"toy m sums to {m_sum} > 1: not a semi-measure")
    max_needed = max((len(x) for x in toy_m_map), default=0)
    max_len = max(mix.max_n, max_needed)
    nu = build_nu(mix, steps, max_len=max_len, tol=tol)
    diag = np.real(np.diag(nu.to_dense()))
    if float(diag.sum()) > 1 + tol:
        raise ValueError(f"diagonal sums to {float(diag.sum()):.12f} > 1")
    from .operators import ind_index

    c1, c2 = float("inf"), 0.0
    w1 = w2 = ""
    for x, m in sorted(toy_m_map.items(), key=lambda kv: (len(kv[0]), kv[0])):
        if m == 0:
            continue
        ratio = float(diag[ind_index(x)]) / float(m)
        if ratio < c1:
            c1, w1 = ratio, x
        if ratio > c2:
            c2, w2 = ratio, x
    return DiagReport(
        c1=c1,
        c2=c2,
        c1_witness=w1 or "-",
        c2_witness=w2 or "-",
        diagonal_sum=float(diag.sum()),
        m_sum=m_sum,
    )
