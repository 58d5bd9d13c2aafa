"""Evolution operators, halting profiles, output extraction.

The evolution operator u of a machine on a looped window is assembled by the
kernel layer as a sparse matrix over the configuration space; u|c> is the
superposition of successor configurations of c.  The grammar forbids rules
out of the final state, so the builder completes that block with the revival
permutation (final, syms) -> (start, syms, every head one cell right).  On a
finite loop an absorbing final block with inflow cannot be unitary (finite
permutations have no transient states), and revival is invisible to the
halting convention because halting weight must be 0 strictly before t and 1
at t, and profiles take the least such t.

Output extraction follows the two-sided convention: final-state
configurations whose output tape reads s### (a bit string at the origin,
then blanks) map coherently to the indeterminate-length state |s>, with
coherence classes keyed by head positions and non-output tape contents;
every other configuration decoheres onto the empty state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from . import _core
from .exactnum import ExactComplex
from .machines import ConfigSpace, QTMDef, SYMBOL_DIGIT
from .operators import (
    EPS_NUM,
    Operator,
    ind_dim,
    ind_index,
    ind_offset,
    ind_string,
)

DEFAULT_ETA = 1e-6
DEFAULT_T_MAX = 16


class MissingRuleError(ValueError):
    """A reachable non-final configuration has no applicable rule."""


class EvolveError(ValueError):
    pass


class OutputTooLongError(ValueError):
    pass


class Evolution:
    """Assembled evolution operator for one configuration space."""

    def __init__(self, cs: ConfigSpace):
        self.cs = cs
        m = cs.machine
        offsets, rule_q, rule_write, rule_move, rule_amp = m.rule_table()
        rows, cols, amps, missing = _core.assemble_evolution_coo(
            cs.n_states,
            cs.tapes,
            cs.window,
            cs.start_index,
            cs.final_index,
            np.ascontiguousarray(offsets),
            np.ascontiguousarray(rule_q),
            np.ascontiguousarray(rule_write),
            np.ascontiguousarray(rule_move),
            np.ascontiguousarray(rule_amp),
        )
        if missing >= 0:
            raise MissingRuleError(
                f"machine {m.name!r}: no rule for configuration {missing} "
                f"({cs.describe(int(missing))})"
            )
        self.csr = sp.csr_matrix(
            (amps, (rows, cols)), shape=(cs.dim, cs.dim), dtype=np.complex128
        )
        self.nnz = int(self.csr.nnz)

    def apply_columns(self, v: np.ndarray, steps: int = 1) -> np.ndarray:
        """u^steps @ v for a dense (dim x r) column block."""
        for _ in range(steps):
            v = self.csr @ v
        return v

    def conjugate(self, rho: sp.spmatrix) -> sp.csr_matrix:
        return (self.csr @ rho @ self.csr.conj().T).tocsr()


@lru_cache(maxsize=16)
def _cached_evolution(machine: QTMDef, window: int) -> Evolution:
    return Evolution(ConfigSpace(machine, window))


def build_evolution(cs: ConfigSpace) -> Evolution:
    return _cached_evolution(cs.machine, cs.window)


# -- exact backend -----------------------------------------------------------


@lru_cache(maxsize=16)
def _exact_groups(machine: QTMDef):
    groups: dict[tuple[int, int], list] = {}
    for (q, rc), rules in machine.rule_groups().items():
        entries = []
        for r in rules:
            if r.amp.is_zero():
                continue
            entries.append(
                (
                    machine.state_index(r.target),
                    [SYMBOL_DIGIT[c] for c in r.writes],
                    [1 if c == "R" else -1 for c in r.moves],
                    r.amp,
                )
            )
        groups[(q, rc)] = entries
    return groups


def exact_step(cs: ConfigSpace, col: dict[int, ExactComplex]) -> dict[int, ExactComplex]:
    """One exact evolution step of a sparse amplitude vector."""
    m = cs.machine
    if not m.is_exact:
        raise EvolveError(f"machine {m.name!r} has non-exact amplitudes")
    groups = _exact_groups(m)
    pow3 = cs._pow3
    w = cs.window
    out: dict[int, ExactComplex] = {}
    for idx, amp in col.items():
        q, contents, heads = cs.decode(idx)
        if q == cs.final_index:
            tgt = cs.encode(
                cs.start_index, contents, [(h + 1) % w for h in heads]
            )
            out[tgt] = out.get(tgt, ExactComplex(0)) + amp
            continue
        rc = sum(((contents[t] // pow3[heads[t]]) % 3) * 3**t for t in range(cs.tapes))
        entries = groups.get((q, rc))
        if not entries:
            raise MissingRuleError(
                f"machine {m.name!r}: no rule for configuration {idx} ({cs.describe(idx)})"
            )
        for q2, wdigits, moves, ramp in entries:
            new_contents = list(contents)
            new_heads = list(heads)
            for t in range(cs.tapes):
                rdig = (contents[t] // pow3[heads[t]]) % 3
                new_contents[t] = contents[t] + (wdigits[t] - rdig) * pow3[heads[t]]
                new_heads[t] = (heads[t] + moves[t]) % w
            tgt = cs.encode(q2, new_contents, new_heads)
            out[tgt] = out.get(tgt, ExactComplex(0)) + amp * ramp
    return {k: v for k, v in out.items() if not v.is_zero()}


# -- well-formedness ---------------------------------------------------------


@dataclass
class WellformedReport:
    machine: str
    window: int
    dim: int
    defect: float
    passed: bool
    backend: str
    exact_zero: bool = False


def wellformed_check(cs: ConfigSpace, tol: float = EPS_NUM) -> WellformedReport:
    """max-norm defect of u u* - I; exact machines get an exact verdict."""
    m = cs.machine
    if m.is_exact:
        cols: dict[int, list[tuple[int, ExactComplex]]] = {}
        one = ExactComplex(1)
        for c in range(cs.dim):
            col = exact_step(cs, {c: one})
            cols[c] = list(col.items())
        gram: dict[tuple[int, int], ExactComplex] = {}
        for c, entries in cols.items():
            for r1, a1 in entries:
                for r2, a2 in entries:
                    key = (r1, r2)
                    gram[key] = gram.get(key, ExactComplex(0)) + a1 * a2.conjugate()
        worst = Fraction(0)
        seen_diag = 0
        for (r1, r2), v in gram.items():
            if r1 == r2:
                seen_diag += 1
                d = v - one
            else:
                d = v
            worst = max(worst, d.abs2())
        if seen_diag < cs.dim:
            worst = max(worst, Fraction(1))  # some row never hit: defect 1
        defect = float(worst) ** 0.5
        return WellformedReport(
            machine=m.name,
            window=cs.window,
            dim=cs.dim,
            defect=defect,
            passed=worst == 0 or defect <= tol,
            backend="exact",
            exact_zero=worst == 0,
        )
    u = build_evolution(cs).csr
    g = (u @ u.conj().T).tolil()
    g.setdiag(g.diagonal() - 1.0)
    data = g.tocsr().data
    defect = float(np.max(np.abs(data))) if data.size else 0.0
    return WellformedReport(
        machine=m.name,
        window=cs.window,
        dim=cs.dim,
        defect=defect,
        passed=defect <= tol,
        backend="float",
    )


# -- embedding and factored states -------------------------------------------


@dataclass
class FactoredState:
    """rho = sum_i weights[i] |columns[:, i]><columns[:, i]| over a config space."""

    columns: np.ndarray  # (dim, r) complex
    weights: np.ndarray  # (r,) float, nonnegative

    @property
    def rank(self) -> int:
        return int(self.columns.shape[1])

    def trace(self) -> float:
        return float(np.sum(self.weights * np.sum(np.abs(self.columns) ** 2, axis=0)))


def _qk_dim_to_k(dim: int) -> int:
    k = int(dim).bit_length() - 1
    if 1 << k != dim:
        raise ValueError(f"input operator dimension {dim} is not a power of two")
    return k


def factor_qk_operator(sigma: Operator, cutoff: float = 1e-14):
    """Eigendecompose a small semi-density operator into (weights, vectors)."""
    d = sigma.to_dense()
    h = (d + d.conj().T) / 2
    vals, vecs = np.linalg.eigh(h)
    keep = vals > cutoff
    if np.any(vals < -1e-8):
        raise ValueError(f"input operator has negative eigenvalue {vals.min():.3e}")
    return vals[keep], vecs[:, keep]


def embed_columns(cs: ConfigSpace, sigma: Operator) -> FactoredState:
    """Factored image of a Q_k semi-density operator under the input embedding."""
    k = _qk_dim_to_k(sigma.dim)
    weights, vecs = factor_qk_operator(sigma)
    idx = cs.embed_indices(k)
    cols = np.zeros((cs.dim, vecs.shape[1]), dtype=np.complex128)
    cols[idx, :] = vecs
    return FactoredState(columns=cols, weights=np.asarray(weights, dtype=np.float64))


def embed_input(cs: ConfigSpace, sigma: Operator, tol: float = EPS_NUM) -> Operator:
    """Embed a Q_k semi-density operator: bits at the origin, blanks after,
    heads at the origin, control = start."""
    k = _qk_dim_to_k(sigma.dim)
    tr = sigma.trace()
    tr = float(tr.re) if isinstance(tr, ExactComplex) else tr.real
    if tr > 1 + tol:
        raise ValueError(f"input trace {tr} exceeds 1")
    idx = cs.embed_indices(k)
    dense = sigma.to_dense()
    rows, cols = np.nonzero(dense)
    mat = sp.coo_matrix(
        (dense[rows, cols], (idx[rows], idx[cols])), shape=(cs.dim, cs.dim)
    ).tocsr()
    return Operator(mat)


def factor_embedded(cs: ConfigSpace, rho: Operator, cutoff: float = 1e-14) -> FactoredState:
    """Factor a (sparse, low-support) config-space operator."""
    m = rho.matrix
    if sp.issparse(m):
        coo = m.tocoo()
        support = np.unique(np.concatenate([coo.row, coo.col]))
        sub = np.asarray(m[support][:, support].todense(), dtype=np.complex128)
    else:
        d = rho.to_dense()
        nz = np.flatnonzero(np.any(d != 0, axis=0) | np.any(d != 0, axis=1))
        support = nz
        sub = d[np.ix_(support, support)]
    h = (sub + sub.conj().T) / 2
    vals, vecs = np.linalg.eigh(h) if support.size else (np.zeros(0), np.zeros((0, 0)))
    keep = vals > cutoff
    cols = np.zeros((cs.dim, int(keep.sum())), dtype=np.complex128)
    cols[support, :] = vecs[:, keep]
    return FactoredState(columns=cols, weights=vals[keep].astype(np.float64))


# -- evolve ------------------------------------------------------------------


def evolve(cs: ConfigSpace, rho: Operator, t: int, tol: float = EPS_NUM) -> Operator:
    """u^t rho u^t*; trace must be preserved within tol."""
    if rho.dim != cs.dim:
        raise EvolveError(f"operator dim {rho.dim} != configuration dim {cs.dim}")
    if t < 0:
        raise EvolveError("negative step count")
    ev = build_evolution(cs)
    mat = rho.matrix if sp.issparse(rho.matrix) else sp.csr_matrix(rho.to_dense())
    before = complex(mat.diagonal().sum()).real
    for _ in range(t):
        mat = ev.conjugate(mat)
    after = complex(mat.diagonal().sum()).real
    drift_tol = max(tol, tol * max(1, t) * 10)
    if abs(after - before) > drift_tol and cs.machine.is_exact:
        raise EvolveError(f"trace drift {after - before:.3e} after {t} steps")
    if abs(after - before) > 1e-6:
        raise EvolveError(f"trace drift {after - before:.3e} after {t} steps")
    return Operator(mat)


# -- halting profile ---------------------------------------------------------


@dataclass
class HaltingProfile:
    machine: str
    window: int
    eta: float
    t_max: int
    halted: bool
    t: Optional[int]
    weights: list
    diagnostic: str
    exact: bool = False

    def weight(self, t: int):
        return self.weights[t]


def _final_weight(cs: ConfigSpace, fs: FactoredState) -> float:
    sl = cs.final_slice
    block = fs.columns[sl]
    return float(np.sum(fs.weights * np.sum(np.abs(block) ** 2, axis=0)))


def halting_profile(
    cs: ConfigSpace,
    rho: Operator,
    t_max: int = DEFAULT_T_MAX,
    eta: Optional[float] = None,
) -> HaltingProfile:
    """Least t with halting weight >= 1-eta and <= eta strictly before.

    Exact machines with diagonal exact inputs get the exact path (eta = 0).
    A weight landing strictly inside (eta, 1-eta) blocks every later halting
    time; that run is reported non-halting with a "slides through"
    diagnostic naming the first offending step.
    """
    exact_ok = (
        cs.machine.is_exact
        and rho.is_exact
        and rho.dim != cs.dim
        and rho.is_diagonal()
    )
    if eta is None:
        eta = 0.0 if exact_ok else DEFAULT_ETA

    if exact_ok:
        return _halting_profile_exact(cs, rho, t_max, eta)

    if rho.dim == cs.dim:
        fs = factor_embedded(cs, rho)
    else:
        fs = embed_columns(cs, rho)
    ev = build_evolution(cs)
    weights = [_final_weight(cs, fs)]
    cols = fs.columns
    for _ in range(t_max):
        cols = ev.apply_columns(cols)
        weights.append(
            float(np.sum(fs.weights * np.sum(np.abs(cols[cs.final_slice]) ** 2, axis=0)))
        )
    return _judge_profile(cs, weights, eta, t_max, exact=False)


def _halting_profile_exact(
    cs: ConfigSpace, sigma: Operator, t_max: int, eta: float
) -> HaltingProfile:
    k = _qk_dim_to_k(sigma.dim)
    idx = cs.embed_indices(k)
    cols: list[dict[int, ExactComplex]] = []
    weights_in: list[Fraction] = []
    for b in range(sigma.dim):
        w = sigma.matrix[b, b]
        if not w.is_zero():
            weights_in.append(w.re)
            cols.append({int(idx[b]): ExactComplex(1)})
    lo, hi = cs.final_slice.start, cs.final_slice.stop

    def fw() -> Fraction:
        total = Fraction(0)
        for w, col in zip(weights_in, cols):
            for i, a in col.items():
                if lo <= i < hi:
                    total += w * a.abs2()
        return total

    weights = [fw()]
    for _ in range(t_max):
        cols = [exact_step(cs, c) for c in cols]
        weights.append(fw())
    return _judge_profile(cs, weights, eta, t_max, exact=True)


def _judge_profile(cs, weights, eta, t_max, exact) -> HaltingProfile:
    # weight at t=0 is always 0 (start != final); judging starts at t=1
    for t in range(1, t_max + 1):
        w = weights[t]
        wf = float(w)
        if wf >= 1 - eta:
            return HaltingProfile(
                machine=cs.machine.name,
                window=cs.window,
                eta=eta,
                t_max=t_max,
                halted=True,
                t=t,
                weights=weights,
                diagnostic="",
                exact=exact,
            )
        if wf > eta:
            return HaltingProfile(
                machine=cs.machine.name,
                window=cs.window,
                eta=eta,
                t_max=t_max,
                halted=False,
                t=None,
                weights=weights,
                diagnostic=(
                    f"weight {wf:.6g} entered ({eta:g}, {1 - eta:g}) at t={t}; "
                    "no exact halting time exists (slides through)"
                ),
                exact=exact,
            )
    return HaltingProfile(
        machine=cs.machine.name,
        window=cs.window,
        eta=eta,
        t_max=t_max,
        halted=False,
        t=None,
        weights=weights,
        diagnostic=f"halting weight never reached {1 - eta:g} within t_max={t_max}",
        exact=exact,
    )


# -- output extraction -------------------------------------------------------


class IndeterminateState:
    """PSD operator over the indeterminate-length space, kept factored.

    rho = lambda_weight * |empty><empty| + sum_i weights[i] |v_i><v_i| with
    the v_i dense vectors over Q_0 + ... + Q_max_len.  The lambda term is the
    decohered mass from non-final (or malformed-tape) configurations.
    """

    def __init__(self, max_len: int, factors=None, lambda_weight: float = 0.0):
        self.max_len = int(max_len)
        self.factors: list[tuple[float, np.ndarray]] = []
        self.lambda_weight = float(lambda_weight)
        for w, v in factors or []:
            v = np.asarray(v, dtype=np.complex128).reshape(-1)
            if v.shape[0] != ind_dim(self.max_len):
                raise ValueError("factor vector has wrong dimension")
            if float(w) < -1e-12:
                raise ValueError("negative factor weight")
            self.factors.append((float(w), v))

    @property
    def dim(self) -> int:
        return ind_dim(self.max_len)

    def trace(self) -> float:
        return self.lambda_weight + float(
            sum(w * np.sum(np.abs(v) ** 2) for w, v in self.factors)
        )

    def scale(self, c: float) -> "IndeterminateState":
        return IndeterminateState(
            self.max_len,
            [(w * c, v) for w, v in self.factors],
            lambda_weight=self.lambda_weight * c,
        )

    def __add__(self, other: "IndeterminateState") -> "IndeterminateState":
        max_len = max(self.max_len, other.max_len)
        out = IndeterminateState(max_len, lambda_weight=self.lambda_weight + other.lambda_weight)
        for src in (self, other):
            for w, v in src.factors:
                pad = np.zeros(ind_dim(max_len), dtype=np.complex128)
                pad[: v.shape[0]] = v
                out.factors.append((w, pad))
        return out

    def expectation(self, s: str) -> float:
        """<s| rho |s> for a classical string s."""
        idx = ind_index(s)
        if idx >= self.dim:
            return 0.0
        val = sum(w * abs(v[idx]) ** 2 for w, v in self.factors)
        if idx == 0:
            val += self.lambda_weight
        return float(val)

    def block(self, ell: int) -> np.ndarray:
        """Dense Q_ell block (the length-ell restriction)."""
        if ell > self.max_len:
            return np.zeros((1 << ell, 1 << ell), dtype=np.complex128)
        off = ind_offset(ell)
        n = 1 << ell
        out = np.zeros((n, n), dtype=np.complex128)
        for w, v in self.factors:
            blk = v[off : off + n]
            out += w * np.outer(blk, blk.conj())
        if ell == 0:
            out[0, 0] += self.lambda_weight
        return out

    def block_operator(self, ell: int) -> Operator:
        return Operator(self.block(ell), hermitian=True)

    def to_operator(self) -> Operator:
        n = self.dim
        out = np.zeros((n, n), dtype=np.complex128)
        for w, v in self.factors:
            out += w * np.outer(v, v.conj())
        out[0, 0] += self.lambda_weight
        return Operator(out, hermitian=True)

    def distance(self, other: "IndeterminateState") -> float:
        """Trace distance, computed on the joint factor support."""
        coords = {0}
        for src in (self, other):
            for _, v in src.factors:
                coords.update(np.flatnonzero(np.abs(v) > 1e-16).tolist())
        coords = np.asarray(sorted(coords), dtype=np.int64)

        def sub(state: "IndeterminateState") -> np.ndarray:
            a = np.zeros((coords.size, coords.size), dtype=np.complex128)
            for w, v in state.factors:
                vv = v[coords[coords < v.shape[0]]]
                if vv.shape[0] < coords.size:
                    vv = np.concatenate([vv, np.zeros(coords.size - vv.shape[0])])
                a += w * np.outer(vv, vv.conj())
            a[0, 0] += state.lambda_weight
            return a

        diff = sub(self) - sub(other)
        diff = (diff + diff.conj().T) / 2
        return float(np.sum(np.abs(np.linalg.eigvalsh(diff))) / 2)

    def validate_semidensity(self, tol: float = EPS_NUM) -> None:
        tr = self.trace()
        if tr > 1 + tol:
            raise ValueError(f"trace {tr} exceeds 1")


def classify_support(cs: ConfigSpace, support: np.ndarray):
    return _core.classify_output_configs(
        np.ascontiguousarray(support, dtype=np.int64),
        cs.n_states,
        cs.tapes,
        cs.window,
        cs.final_index,
        cs.out_tape,
    )


def extract_output_factored(
    cs: ConfigSpace, fs: FactoredState, max_len: Optional[int] = None
) -> IndeterminateState:
    max_len = cs.window if max_len is None else int(max_len)
    row_mass = np.sum(np.abs(fs.columns) ** 2, axis=1)
    support = np.flatnonzero(row_mass > 0)
    out = IndeterminateState(max_len)
    if support.size == 0:
        return out
    kind, out_len, out_val, class_key = classify_support(cs, support)
    kind = np.asarray(kind)
    lam_rows = support[kind == 0]
    if lam_rows.size:
        mass = np.abs(fs.columns[lam_rows]) ** 2
        out.lambda_weight = float(np.sum(fs.weights * np.sum(mass, axis=0)))
    prop = kind == 1
    if not np.any(prop):
        return out
    lens = np.asarray(out_len)[prop].astype(np.int64)
    if np.any(lens > max_len):
        raise OutputTooLongError(
            f"output string of length {int(lens.max())} exceeds max_len {max_len}"
        )
    vals = np.asarray(out_val)[prop]
    keys = np.asarray(class_key)[prop]
    rows = support[prop]
    targets = ((1 << lens) - 1) + vals
    uniq, inv = np.unique(keys, return_inverse=True)
    for c in range(uniq.size):
        mask = inv == c
        block = np.zeros((ind_dim(max_len), fs.rank), dtype=np.complex128)
        block[targets[mask], :] = fs.columns[rows[mask], :]
        for i in range(fs.rank):
            vec = block[:, i]
            if np.sum(np.abs(vec) ** 2) > 1e-30:
                out.factors.append((float(fs.weights[i]), vec))
    return out


def extract_output(
    cs: ConfigSpace, rho: Operator, max_len: Optional[int] = None
) -> IndeterminateState:
    """Apply the output-extraction channel to a config-space operator."""
    if rho.dim != cs.dim:
        raise ValueError(f"operator dim {rho.dim} != configuration dim {cs.dim}")
    fs = factor_embedded(cs, rho)
    return extract_output_factored(cs, fs, max_len)


def run_machine(
    cs: ConfigSpace,
    sigma: Operator,
    t_max: int = DEFAULT_T_MAX,
    eta: Optional[float] = None,
    max_len: Optional[int] = None,
):
    """Profile a Q_k input; on halting, extract the output at the halting time.

    Returns (profile, IndeterminateState or None).
    """
    profile = halting_profile(cs, sigma, t_max=t_max, eta=eta)
    if not profile.halted:
        return profile, None
    fs = embed_columns(cs, sigma)
    ev = build_evolution(cs)
    fs = FactoredState(ev.apply_columns(fs.columns, profile.t), fs.weights)
    return profile, extract_output_factored(cs, fs, max_len)
