"""Coverage tables: which classical strings a machine's halting subspaces
nearly produce, and the b-th-string decoder over them.

For each halting subspace projection P_i (halting time t_i) the channel
image O_i = Psi^{t_i, 1/j}(P_i) is restricted to each output length ell,
thresholded at 1/2 into a projection N_i^ell, and every classical y with
<y|N_i^ell|y> >= 1 - 2^{-k-3} enters the table.  Rows are ordered
lexicographically by (t, ell, y); b-indices are 1-based positions in that
fixed order.  Counting: each kept eigenvalue is >= 1/2, so
Tr N <= 2 Tr O^ell, and summing over i and ell gives at most 2^{k+1} rows.

The precision parameter j is carried to the machine as a classical aux
parameter; machines without a spare tape receive it as part of the run
configuration (a recorded no-op for machines that ignore it either way).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .channel import ApproxChannel, build_channel
from .evolution import IndeterminateState
from .halting import ETA_SUB, HaltingDecomposition, enumerate_projections
from .machines import QTMDef
from .operators import (
    EPS_NUM,
    CapacityResult,
    Operator,
    PureState,
    capacity_check,
    threshold_projection,
)

DEFAULT_T_MAX = 16


class DecodeError(ValueError):
    pass


class CoverageBoundError(ValueError):
    """A counting bound that must hold mathematically failed numerically."""


def precision_param(k: int) -> int:
    """j = 2^(k+5)"""
    return 1 << (k + 5)


def score_threshold(k: int) -> float:
    """1 - 2^(-k-3) = 1 - 4/j"""
    return 1.0 - 2.0 ** (-k - 3)


@dataclass
class CoverageRow:
    index: int  # 1-based position in the fixed (t, ell, y) order
    t: int
    ell: int
    y: str
    score: float


@dataclass
class BlockAudit:
    t: int
    ell: int
    trace_o: float
    trace_n: float
    rank_n: int
    covered: int


@dataclass
class CoverageTable:
    machine: str
    k: int
    j: int
    t_max: int
    ell_max: int
    window: int
    threshold: float
    bound_2k1: int
    rows: list[CoverageRow]
    audits: list[BlockAudit]
    trace_sum: float  # sum_i Tr O_i

    def decode(self, b: int) -> str:
        if not 1 <= b <= len(self.rows):
            raise DecodeError(
                f"index b={b} out of range 1..{len(self.rows)} "
                f"(as a {self.k + 1}-bit number it may name no discovered state)"
            )
        return self.rows[b - 1].y

    def strings(self) -> list[str]:
        return [r.y for r in self.rows]

    def row_for(self, y: str) -> Optional[CoverageRow]:
        for r in self.rows:
            if r.y == y:
                return r
        return None


def build_O(
    machine: QTMDef,
    k: int,
    t_max: int = DEFAULT_T_MAX,
    window: Optional[int] = None,
    j: Optional[int] = None,
    eta_sub: float = ETA_SUB,
) -> list[tuple[int, IndeterminateState]]:
    """O_i = Psi^{t_i, 1/j}(P_i) for every nonzero halting subspace."""
    j = precision_param(k) if j is None else int(j)
    w = window if window is not None else machine.window
    decomposition = enumerate_projections(machine, k, t_max, window=w, eta_sub=eta_sub)
    out = []
    for space in decomposition.spaces:
        ch = build_channel(machine, k, space.t, Fraction(1, j), window=w)
        o = ch.apply(space.projection)
        out.append((space.t, o))
    total = sum(o.trace() for _, o in out)
    if total > (1 << k) + EPS_NUM:
        raise CoverageBoundError(
            f"sum of Tr O_i = {total:.9f} exceeds 2^k = {1 << k}"
        )
    return out


def restrict_length(o: Union[IndeterminateState, Operator], ell: int) -> Operator:
    """The Q_ell diagonal block of an indeterminate-space operator."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    if isinstance(o, IndeterminateState):
        if ell > o.max_len:
            return Operator.zero(1 << ell)
        return o.block_operator(ell)
    # dense operator over the indeterminate space
    off = (1 << ell) - 1
    n = 1 << ell
    d = o.to_dense()
    if off + n > d.shape[0]:
        raise ValueError(f"ell={ell} out of range for dim {d.shape[0]}")
    return Operator(d[off : off + n, off : off + n])


def near_one_count_check(n: Operator, k: int, tol: float = EPS_NUM) -> dict:
    """Count basis strings with <y|N|y> >= 1 - 2^{-k-3}; the count can never
    exceed 2 Tr N (Markov on the diagonal), and the rank-m capacity bound is
    cross-checked on the computational basis."""
    d = n.to_dense()
    proj_defect = float(np.max(np.abs(d @ d - d), initial=0.0))
    if proj_defect > 1e-7:
        raise ValueError(f"near_one_count_check needs a projection (defect {proj_defect:.3e})")
    thr = score_threshold(k)
    diag = np.real(np.diag(d))
    count = int(np.sum(diag >= thr - tol))
    tr = float(np.sum(diag))
    bound = 2.0 * tr
    if count > bound + tol:
        raise CoverageBoundError(f"near-one count {count} exceeds 2 Tr N = {bound:.6f}")
    dim = d.shape[0]
    capacity: Optional[CapacityResult] = None
    m = int(round(tr))
    if m >= 1:
        family = [PureState.basis(dim, i) for i in range(dim)]
        capacity = capacity_check(n, family, tol=tol)
        if not capacity.bound_holds:
            raise CoverageBoundError(
                f"capacity bound violated: {capacity.count} >= {capacity.bound}"
            )
    return {"count": count, "bound": bound, "capacity": capacity}


def coverage_table(
    machine: QTMDef,
    k: int,
    t_max: int = DEFAULT_T_MAX,
    ell_max: Optional[int] = None,
    window: Optional[int] = None,
    j: Optional[int] = None,
    eta_sub: float = ETA_SUB,
    tol: float = EPS_NUM,
) -> CoverageTable:
    j = precision_param(k) if j is None else int(j)
    w = window if window is not None else machine.window
    ell_max = w if ell_max is None else int(ell_max)
    thr = 1.0 - 4.0 / j
    images = build_O(machine, k, t_max=t_max, window=w, j=j, eta_sub=eta_sub)
    rows: list[CoverageRow] = []
    audits: list[BlockAudit] = []
    for t, o in images:  # ascending t by construction
        for ell in range(0, ell_max + 1):
            block = restrict_length(o, ell)
            trace_o = float(np.real(block.trace()))
            if trace_o <= tol:
                continue
            n_proj = threshold_projection(block, 0.5, tol=tol)
            nd = n_proj.to_dense()
            trace_n = float(np.real(np.trace(nd)))
            # Markov at threshold 1/2 with the tie rule: every eigenvalue
            # admitted into N is >= 1/2 - tol, so Tr N (1/2 - tol) <= Tr O.
            if trace_n * (0.5 - tol) > trace_o + tol:
                raise CoverageBoundError(
                    f"Tr N = {trace_n:.6f} exceeds 2 Tr O^ell = {2 * trace_o:.6f} "
                    f"at (t={t}, ell={ell})"
                )
            diag = np.real(np.diag(nd))
            covered = 0
            for yv in range(1 << ell):
                score = float(diag[yv])
                if score >= thr - tol:
                    y = format(yv, f"0{ell}b") if ell else ""
                    rows.append(CoverageRow(index=0, t=t, ell=ell, y=y, score=score))
                    covered += 1
            audits.append(
                BlockAudit(
                    t=t,
                    ell=ell,
                    trace_o=trace_o,
                    trace_n=trace_n,
                    rank_n=int(round(trace_n)),
                    covered=covered,
                )
            )
    rows.sort(key=lambda r: (r.t, r.ell, r.y))
    for i, r in enumerate(rows):
        r.index = i + 1
    bound = 1 << (k + 1)
    if len(rows) > bound:
        raise CoverageBoundError(f"{len(rows)} covered strings exceed 2^(k+1) = {bound}")
    return CoverageTable(
        machine=machine.name,
        k=k,
        j=j,
        t_max=t_max,
        ell_max=ell_max,
        window=w,
        threshold=thr,
        bound_2k1=bound,
        rows=rows,
        audits=audits,
        trace_sum=float(sum(o.trace() for _, o in images)),
    )


def decode(
    machine: QTMDef,
    k: int,
    b: int,
    t_max: int = DEFAULT_T_MAX,
    ell_max: Optional[int] = None,
    window: Optional[int] = None,
) -> str:
    """The b-th (1-based) covered string in the fixed (t, ell, y) order."""
    table = coverage_table(machine, k, t_max=t_max, ell_max=ell_max, window=window)
    return table.decode(b)
