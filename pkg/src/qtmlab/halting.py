"""Per-time halting subspaces of the classical-input space Q_k.

For each step count t', the operator A_t' = (P_F u^t' E)* (P_F u^t' E) on
Q_k gives the halting weight at t' as <psi|A_t'|psi>.  An input halts
exactly at t iff that weight is 0 for every t' < t and 1 at t, so the
halting-at-t inputs form the null space of

    C_t = sum_{t' < t} A_t' + (I - A_t),

a sum of PSD terms (A_t <= I because the evolution is unitary and the
embedding is an isometry).  Null spaces of the C_t are pairwise orthogonal
and their ranks sum to at most 2^k.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .evolution import build_evolution
from .machines import ConfigSpace, QTMDef
from .operators import EPS_NUM, Operator

ETA_SUB = 1e-7  # eigenvalue cutoff for membership in a halting subspace


class HaltingSpaceError(ValueError):
    pass


@dataclass
class HaltingProjection:
    k: int
    t: int
    rank: int
    projection: Operator  # on Q_k
    basis: np.ndarray  # (2^k, rank) orthonormal columns


@dataclass
class HaltingDecomposition:
    machine: str
    k: int
    window: int
    t_max: int
    eta_sub: float
    spaces: list[HaltingProjection]  # rank > 0 only, ascending t
    total_rank: int

    def projection_for(self, t: int) -> Optional[HaltingProjection]:
        for s in self.spaces:
            if s.t == t:
                return s
        return None

    @property
    def times(self) -> list[int]:
        return [s.t for s in self.spaces]


@lru_cache(maxsize=32)
def _gram_sweep(machine: QTMDef, k: int, window: int, t_max: int):
    """A_1 .. A_t_max as 2^k x 2^k arrays, one evolution sweep."""
    cs = ConfigSpace(machine, window)
    if k > cs.window:
        raise HaltingSpaceError(f"k={k} exceeds window {cs.window}")
    ev = build_evolution(cs)
    n = 1 << k
    v = np.zeros((cs.dim, n), dtype=np.complex128)
    v[cs.embed_indices(k), np.arange(n)] = 1.0
    grams = []
    for _ in range(t_max):
        v = ev.apply_columns(v)
        w = v[cs.final_slice]
        grams.append(w.conj().T @ w)
    return cs, grams


def _null_projection(c: np.ndarray, eta_sub: float):
    c = (c + c.conj().T) / 2
    vals, vecs = np.linalg.eigh(c)
    keep = np.abs(vals) <= eta_sub
    basis = vecs[:, keep]
    return basis


def halting_subspace(
    machine: QTMDef,
    k: int,
    t: int,
    window: Optional[int] = None,
    eta_sub: float = ETA_SUB,
) -> HaltingProjection:
    """Projection onto the inputs of length k halting exactly at t."""
    if t < 1:
        raise HaltingSpaceError("halting times start at 1")
    w = window if window is not None else machine.window
    cs, grams = _gram_sweep(machine, k, w, t)
    n = 1 << k
    c = np.eye(n, dtype=np.complex128) - grams[t - 1]
    for a in grams[: t - 1]:
        c = c + a
    basis = _null_projection(c, eta_sub)
    rank = basis.shape[1]
    p = basis @ basis.conj().T
    tr = float(np.trace(p).real)
    if abs(tr - rank) > 0.01:
        raise HaltingSpaceError(
            f"projection trace {tr:.6f} far from rank {rank} (t={t}, k={k})"
        )
    return HaltingProjection(
        k=k,
        t=t,
        rank=rank,
        projection=Operator(p, hermitian=True, psd=True, projection=True),
        basis=basis,
    )


def enumerate_projections(
    machine: QTMDef,
    k: int,
    t_max: int,
    window: Optional[int] = None,
    eta_sub: float = ETA_SUB,
    tol: float = EPS_NUM,
) -> HaltingDecomposition:
    """All nonzero halting subspaces for t = 1..t_max, with the guarantees
    checked: pairwise orthogonality and total rank <= 2^k."""
    w = window if window is not None else machine.window
    cs, grams = _gram_sweep(machine, k, w, t_max)
    n = 1 << k
    spaces = []
    running = np.zeros((n, n), dtype=np.complex128)
    for t in range(1, t_max + 1):
        c = running + np.eye(n, dtype=np.complex128) - grams[t - 1]
        basis = _null_projection(c, eta_sub)
        if basis.shape[1]:
            p = basis @ basis.conj().T
            spaces.append(
                HaltingProjection(
                    k=k,
                    t=t,
                    rank=basis.shape[1],
                    projection=Operator(p, hermitian=True, psd=True, projection=True),
                    basis=basis,
                )
            )
        running = running + grams[t - 1]
    total = sum(s.rank for s in spaces)
    if total > n:
        raise HaltingSpaceError(f"ranks sum to {total} > dim Q_k = {n}")
    for i in range(len(spaces)):
        for j in range(i + 1, len(spaces)):
            cross = float(
                np.trace(
                    spaces[i].projection.to_dense() @ spaces[j].projection.to_dense()
                ).real
            )
            if cross > tol:
                raise HaltingSpaceError(
                    f"subspaces t={spaces[i].t} and t={spaces[j].t} overlap: "
                    f"Tr(P P') = {cross:.3e}"
                )
    return HaltingDecomposition(
        machine=machine.name,
        k=k,
        window=w,
        t_max=t_max,
        eta_sub=eta_sub,
        spaces=spaces,
        total_rank=total,
    )
