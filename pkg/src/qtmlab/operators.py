"""Operator algebra over small Hilbert spaces.

Two entry backends share one interface: complex128 arrays (optionally scipy
sparse) and object arrays of ExactComplex.  Spectral operations (trace
distance, thresholding, null spaces) run on the float shadow via eigh;
structurally diagonal exact operators additionally get an exact rational
path, which is what the exact-vs-float consistency contract is about.
Dense eigendecompositions assume desk-scale dimensions.

Also hosts the indeterminate-length basis bookkeeping: the space
Q = Q_0 + Q_1 + ... + Q_L of classical strings up to length L, with
index(s) = 2^len(s) - 1 + int(s, 2) and the empty string at index 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .exactnum import (
    AmplitudeSyntaxError,
    ExactComplex,
    format_rational,
    parse_rational_token,
)

EPS_NUM = 1e-9  # global numeric tolerance; callers may override per call


class FlagViolation(ValueError):
    """A declared structural flag failed its numeric check."""


class OperatorFormatError(ValueError):
    """Malformed serialized operator text."""


def _is_exact_matrix(matrix) -> bool:
    return isinstance(matrix, np.ndarray) and matrix.dtype == object


def exact_zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    zero = ExactComplex(0)
    out[...] = zero
    return out


def exact_to_complex(matrix: np.ndarray) -> np.ndarray:
    out = np.empty(matrix.shape, dtype=np.complex128)
    flat_in = matrix.reshape(-1)
    flat_out = out.reshape(-1)
    for i, v in enumerate(flat_in):
        flat_out[i] = v.shadow
    return out


class Operator:
    """Square operator with optional structural flags.

    Flags are tri-state (None = unknown); declaring one True triggers a
    numeric check at construction against `tol`.
    """

    def __init__(
        self,
        matrix,
        *,
        hermitian: Optional[bool] = None,
        psd: Optional[bool] = None,
        projection: Optional[bool] = None,
        trace_le_one: Optional[bool] = None,
        tol: float = EPS_NUM,
    ):
        if sp.issparse(matrix):
            matrix = matrix.tocsr()
            if matrix.shape[0] != matrix.shape[1]:
                raise ValueError("operator must be square")
        else:
            matrix = np.asarray(matrix)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise ValueError("operator must be square")
            if matrix.dtype != object:
                matrix = matrix.astype(np.complex128)
        self.matrix = matrix
        self.hermitian = hermitian
        self.psd = psd
        self.projection = projection
        self.trace_le_one = trace_le_one
        self.validate(tol)

    # -- structure ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_exact(self) -> bool:
        return _is_exact_matrix(self.matrix)

    @property
    def backend(self) -> str:
        return "exact" if self.is_exact else "float"

    @property
    def layout(self) -> str:
        return "sparse" if sp.issparse(self.matrix) else "dense"

    def to_dense(self) -> np.ndarray:
        """complex128 image (float shadow for exact entries)."""
        if sp.issparse(self.matrix):
            return np.asarray(self.matrix.todense(), dtype=np.complex128)
        if self.is_exact:
            return exact_to_complex(self.matrix)
        return self.matrix

    def is_diagonal(self, tol: float = 0.0) -> bool:
        if self.is_exact:
            m = self.matrix
            for i in range(m.shape[0]):
                for j in range(m.shape[1]):
                    if i != j and not m[i, j].is_zero():
                        return False
            return True
        d = self.to_dense()
        return bool(np.max(np.abs(d - np.diag(np.diag(d))), initial=0.0) <= tol)

    def diagonal(self):
        if sp.issparse(self.matrix):
            return self.matrix.diagonal()
        return np.diagonal(self.matrix).copy()

    def trace(self):
        if self.is_exact:
            total = ExactComplex(0)
            for v in np.diagonal(self.matrix):
                total = total + v
            return total
        if sp.issparse(self.matrix):
            return complex(self.matrix.diagonal().sum())
        return complex(np.trace(self.matrix))

    def adjoint(self) -> "Operator":
        if self.is_exact:
            m = self.matrix
            out = np.empty_like(m)
            for i in range(m.shape[0]):
                for j in range(m.shape[1]):
                    out[j, i] = m[i, j].conjugate()
            return Operator(out)
        if sp.issparse(self.matrix):
            return Operator(self.matrix.conjugate().T.tocsr())
        return Operator(self.matrix.conj().T)

    def __add__(self, other: "Operator") -> "Operator":
        if self.is_exact and other.is_exact:
            return Operator(self.matrix + other.matrix)
        if self.is_exact or other.is_exact:
            return Operator(self.to_dense() + other.to_dense())
        return Operator(self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        return self + other.scale(-1)

    def scale(self, factor) -> "Operator":
        if self.is_exact and isinstance(factor, (int, Fraction, ExactComplex)):
            f = ExactComplex.coerce(factor)
            out = np.empty_like(self.matrix)
            flat_in = self.matrix.reshape(-1)
            flat_out = out.reshape(-1)
            for i, v in enumerate(flat_in):
                flat_out[i] = v * f
            return Operator(out)
        if isinstance(factor, (Fraction, ExactComplex)):
            factor = complex(factor) if isinstance(factor, Fraction) else factor.shadow
        return Operator(self.to_dense() * factor) if self.is_exact else Operator(self.matrix * factor)

    def matmul(self, other: "Operator") -> "Operator":
        if self.is_exact and other.is_exact:
            return Operator(self.matrix.dot(other.matrix))
        if self.is_exact or other.is_exact:
            return Operator(self.to_dense() @ other.to_dense())
        if sp.issparse(self.matrix) or sp.issparse(other.matrix):
            return Operator(sp.csr_matrix(self.matrix) @ sp.csr_matrix(other.matrix))
        return Operator(self.matrix @ other.matrix)

    # -- checks ------------------------------------------------------------

    def hermitian_defect(self) -> float:
        d = self.to_dense()
        return float(np.max(np.abs(d - d.conj().T), initial=0.0))

    def validate(self, tol: float = EPS_NUM) -> None:
        """Check every flag declared True; raise FlagViolation on failure."""
        if not (self.hermitian or self.psd or self.projection or self.trace_le_one):
            return
        d = self.to_dense()
        if self.hermitian or self.psd or self.projection:
            defect = float(np.max(np.abs(d - d.conj().T), initial=0.0))
            if defect > tol:
                raise FlagViolation(f"hermitian defect {defect:.3e} > {tol:.3e}")
        if self.psd or self.projection:
            h = (d + d.conj().T) / 2
            lo = float(np.linalg.eigvalsh(h)[0]) if self.dim else 0.0
            if lo < -tol:
                raise FlagViolation(f"negative eigenvalue {lo:.3e}")
        if self.projection:
            defect = float(np.max(np.abs(d @ d - d), initial=0.0))
            if defect > tol:
                raise FlagViolation(f"projection defect {defect:.3e} > {tol:.3e}")
        if self.trace_le_one:
            tr = self.trace()
            tr = float(tr.re) if isinstance(tr, ExactComplex) else tr.real
            if tr > 1 + tol:
                raise FlagViolation(f"trace {tr} exceeds 1")

    def rank(self, tol: float = EPS_NUM) -> int:
        h = self.to_dense()
        h = (h + h.conj().T) / 2
        return int(np.sum(np.linalg.eigvalsh(h) > tol))

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, dim: int, exact: bool = False) -> "Operator":
        if exact:
            return cls(exact_zeros((dim, dim)))
        return cls(np.zeros((dim, dim), dtype=np.complex128))

    @classmethod
    def identity(cls, dim: int, exact: bool = False) -> "Operator":
        if exact:
            m = exact_zeros((dim, dim))
            one = ExactComplex(1)
            for i in range(dim):
                m[i, i] = one
            return cls(m)
        return cls(np.eye(dim, dtype=np.complex128))

    @classmethod
    def diagonal_op(cls, values) -> "Operator":
        values = list(values)
        if values and isinstance(values[0], (ExactComplex, Fraction)):
            m = exact_zeros((len(values), len(values)))
            for i, v in enumerate(values):
                m[i, i] = ExactComplex.coerce(v if not isinstance(v, Fraction) else Fraction(v))
            return cls(m)
        return cls(np.diag(np.asarray(values, dtype=np.complex128)))

    @classmethod
    def from_pure(cls, state: "PureState", weight: float = 1.0) -> "Operator":
        v = state.vector.reshape(-1, 1)
        return cls(weight * (v @ v.conj().T))


class PureState:
    """Unit (or sub-unit) vector with a fixed dimension."""

    def __init__(self, vector, tol: float = EPS_NUM, require_unit: bool = True):
        vector = np.asarray(vector, dtype=np.complex128).reshape(-1)
        n = float(np.linalg.norm(vector))
        if require_unit and abs(n - 1.0) > max(tol, 1e-12) * 10:
            raise ValueError(f"state norm {n} is not 1")
        self.vector = vector

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])

    def braket(self, other: "PureState") -> complex:
        return complex(np.vdot(self.vector, other.vector))

    @classmethod
    def basis(cls, dim: int, index: int) -> "PureState":
        v = np.zeros(dim, dtype=np.complex128)
        v[index] = 1.0
        return cls(v)


# -- spectral operations ----------------------------------------------------


def _hermitian_part(d: np.ndarray) -> np.ndarray:
    return (d + d.conj().T) / 2


def trace_distance(a: Operator, b: Operator, tol: float = EPS_NUM) -> float:
    """D(a, b) = (1/2)||a - b||_1 via the spectrum of the difference."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch {a.dim} != {b.dim}")
    if a.is_exact and b.is_exact and a.is_diagonal() and b.is_diagonal():
        total = Fraction(0)
        for i in range(a.dim):
            d = a.matrix[i, i] - b.matrix[i, i]
            if not d.is_real():
                break
            total += abs(d.re)
        else:
            return float(total / 2)
    diff = _hermitian_part(a.to_dense() - b.to_dense())
    vals = np.linalg.eigvalsh(diff)
    return float(np.sum(np.abs(vals)) / 2)


def fidelity_pure(psi: PureState, sigma: Operator) -> float:
    """<psi| sigma |psi> for a pure target."""
    if psi.dim != sigma.dim:
        raise ValueError(f"dimension mismatch {psi.dim} != {sigma.dim}")
    v = psi.vector
    if sp.issparse(sigma.matrix):
        return float(np.real(np.vdot(v, sigma.matrix @ v)))
    return float(np.real(np.vdot(v, sigma.to_dense() @ v)))


def psd_leq(a: Operator, b: Operator, tol: float = EPS_NUM) -> bool:
    """Loewner order a <= b: smallest eigenvalue of b - a is >= -tol."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch {a.dim} != {b.dim}")
    if a.is_exact and b.is_exact and a.is_diagonal() and b.is_diagonal():
        ok = True
        for i in range(a.dim):
            d = b.matrix[i, i] - a.matrix[i, i]
            if not d.is_real():
                ok = False
                break
            if d.re < 0:
                return False
        if ok:
            return True
    diff = _hermitian_part(b.to_dense() - a.to_dense())
    if diff.shape[0] == 0:
        return True
    return bool(np.linalg.eigvalsh(diff)[0] >= -tol)


def threshold_projection(o: Operator, theta: float, tol: float = EPS_NUM) -> Operator:
    """Projection onto eigenspaces of o with eigenvalue >= theta.

    Ties within tol of theta are included (the coverage counting argument
    needs the boundary eigenvectors on the projected side).
    """
    h = _hermitian_part(o.to_dense())
    vals, vecs = np.linalg.eigh(h)
    keep = vals >= theta - tol
    v = vecs[:, keep]
    return Operator(v @ v.conj().T, hermitian=True, projection=True, tol=max(tol, 1e-8))


def null_space(a: Operator, tol: float) -> list[PureState]:
    """Orthonormal basis of the numerical null space (eigenvalues <= tol)."""
    h = _hermitian_part(a.to_dense())
    vals, vecs = np.linalg.eigh(h)
    out = []
    for i in range(len(vals)):
        if abs(vals[i]) <= tol:
            out.append(PureState(vecs[:, i]))
    return out


@dataclass
class CapacityResult:
    m: int
    count: int
    threshold: float
    bound: int
    bound_holds: bool


def capacity_check(
    p: Operator,
    family: Sequence[PureState],
    tol: float = EPS_NUM,
) -> CapacityResult:
    """Count family members with <e|P|e> > 1 - 1/(4m); assert count < 2m.

    P must be a projection of rank m >= 1 and the family orthonormal; the
    bound always holds for valid inputs (rank-m projections cannot be
    near-certain on 2m orthonormal states).
    """
    d = p.to_dense()
    proj_defect = float(np.max(np.abs(d @ d - d), initial=0.0))
    herm_defect = float(np.max(np.abs(d - d.conj().T), initial=0.0))
    if proj_defect > max(tol, 1e-7) or herm_defect > max(tol, 1e-7):
        raise ValueError(f"capacity_check needs a projection (defect {proj_defect:.3e})")
    m = int(round(float(np.real(np.trace(d)))))
    if m < 1:
        return CapacityResult(m=0, count=0, threshold=float("nan"), bound=0, bound_holds=True)
    for i, e in enumerate(family):
        if e.dim != p.dim:
            raise ValueError("family member dimension mismatch")
        for f in family[i + 1 :]:
            if abs(e.braket(f)) > max(tol, 1e-7):
                raise ValueError("family is not orthonormal")
    threshold = 1.0 - 1.0 / (4 * m)
    count = 0
    for e in family:
        score = float(np.real(np.vdot(e.vector, d @ e.vector)))
        if score > threshold:
            count += 1
    return CapacityResult(
        m=m, count=count, threshold=threshold, bound=2 * m, bound_holds=count < 2 * m
    )


# -- serialization ----------------------------------------------------------


def serialize_operator(op: Operator, precision: int = 17) -> str:
    """Line format: `op <dim> <backend>` then `entry <r> <c> <re> <im>`."""
    lines = [f"op {op.dim} {op.backend}"]
    if op.is_exact:
        m = op.matrix
        for i in range(op.dim):
            for j in range(op.dim):
                v = m[i, j]
                if not v.is_zero():
                    lines.append(
                        f"entry {i} {j} {format_rational(v.re)} {format_rational(v.im)}"
                    )
    else:
        d = op.matrix.tocoo() if sp.issparse(op.matrix) else None
        if d is not None:
            order = np.lexsort((d.col, d.row))
            for idx in order:
                v = d.data[idx]
                if v != 0:
                    lines.append(
                        f"entry {d.row[idx]} {d.col[idx]} {v.real:.{precision}g} {v.imag:.{precision}g}"
                    )
        else:
            m = op.matrix
            for i in range(op.dim):
                for j in range(op.dim):
                    v = m[i, j]
                    if v != 0:
                        lines.append(f"entry {i} {j} {v.real:.{precision}g} {v.imag:.{precision}g}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse_operator(text: str) -> Operator:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("op "):
        raise OperatorFormatError("missing `op <dim> <backend>` header")
    head = lines[0].split()
    if len(head) != 3 or head[2] not in ("float", "exact"):
        raise OperatorFormatError(f"bad header {lines[0]!r}")
    try:
        dim = int(head[1])
    except ValueError as exc:
        raise OperatorFormatError(f"bad dimension {head[1]!r}") from exc
    exact = head[2] == "exact"
    matrix = exact_zeros((dim, dim)) if exact else np.zeros((dim, dim), dtype=np.complex128)
    body = lines[1:]
    if body and body[-1] == "end":
        body = body[:-1]
    for ln in body:
        parts = ln.split()
        if len(parts) != 5 or parts[0] != "entry":
            raise OperatorFormatError(f"bad entry line {ln!r}")
        try:
            r, c = int(parts[1]), int(parts[2])
            re_v, re_exact = parse_rational_token(parts[3])
            im_v, im_exact = parse_rational_token(parts[4])
        except (ValueError, AmplitudeSyntaxError) as exc:
            raise OperatorFormatError(f"bad entry line {ln!r}") from exc
        if not (0 <= r < dim and 0 <= c < dim):
            raise OperatorFormatError(f"entry ({r},{c}) outside dim {dim}")
        if exact:
            if not (re_exact and im_exact):
                raise OperatorFormatError(
                    f"exact operator requires rational entries, got {ln!r}"
                )
            matrix[r, c] = ExactComplex(re_v, im_v)
        else:
            matrix[r, c] = complex(float(re_v), float(im_v))
    return Operator(matrix)


# -- indeterminate-length basis ----------------------------------------------


def ind_dim(max_len: int) -> int:
    """Dimension of Q_0 + ... + Q_max_len."""
    return (1 << (max_len + 1)) - 1


def ind_offset(n: int) -> int:
    return (1 << n) - 1


def ind_index(s: str) -> int:
    """Basis index of the classical string s ('' is the empty state)."""
    if s and (set(s) - {"0", "1"}):
        raise ValueError(f"not a bitstring: {s!r}")
    return ind_offset(len(s)) + (int(s, 2) if s else 0)


def ind_string(index: int) -> str:
    """Inverse of ind_index."""
    if index < 0:
        raise ValueError("negative index")
    n = 0
    while ind_offset(n + 1) <= index:
        n += 1
    val = index - ind_offset(n)
    return format(val, f"0{n}b") if n else ""


def ind_basis(s: str, max_len: int) -> PureState:
    return PureState.basis(ind_dim(max_len), ind_index(s))
