"""Operator algebra for one- and two-qubit polarization states.

Everything is dense complex numpy in the circular basis |R> = (1, 0),
|L> = (0, 1), with |H> = (|R> + |L>)/sqrt(2) and |V> = i(|R> - |L>)/sqrt(2)
fixed once here so signs cannot drift between modules. Provides Pauli
composition/decomposition, the lower-triangular T parameterization of
density matrices, and the state-comparison metrics (fidelity, z-gauge
fidelity, concurrence).

All functions are pure; arrays handed out are read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SIGMA_0",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "PAULIS_1Q",
    "KET_R",
    "KET_L",
    "KET_H",
    "KET_V",
    "HERMITICITY_TOL",
    "TRACE_TOL",
    "EIGENVALUE_TOL",
    "DensityMatrix",
    "as_density",
    "pauli_basis",
    "pauli_compose",
    "pauli_decompose",
    "tensor_product",
    "density_from_tparams",
    "tparams_from_density",
    "fidelity",
    "fidelity_up_to_z",
    "concurrence",
    "purity",
    "project_to_physical",
]

_SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULIS_1Q = (SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z)

KET_R = np.array([1.0, 0.0], dtype=complex)
KET_L = np.array([0.0, 1.0], dtype=complex)
KET_H = (KET_R + KET_L) / _SQRT2
KET_V = 1.0j * (KET_R - KET_L) / _SQRT2

# Validation tolerances. Eigensolvers leave O(1e-15) debris; these bounds
# accept that without hiding genuinely broken matrices.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_TOL = 1e-10

for _m in (SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z, KET_R, KET_L, KET_H, KET_V):
    _m.setflags(write=False)
del _m


def _coerce_operator(op, name: str = "operator") -> np.ndarray:
    if isinstance(op, DensityMatrix):
        return op.matrix
    m = np.asarray(op, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    if m.shape[0] not in (2, 4):
        raise ValueError(f"{name} must have dimension 2 or 4, got {m.shape[0]}")
    return m


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated state: Hermitian, unit trace, PSD within tolerance.

    Validation only checks; it never modifies the stored matrix. Use
    :func:`project_to_physical` to repair an unphysical estimate.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = _coerce_operator(self.matrix, "density matrix")
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > HERMITICITY_TOL:
            raise ValueError(f"density matrix is not Hermitian (max deviation {herm:.3g})")
        tr = complex(m.trace())
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr:.12g} is not 1")
        wmin = float(np.linalg.eigvalsh(m).min())
        if wmin < -EIGENVALUE_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {wmin:.3g}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return 1 if self.dim == 2 else 2

    @classmethod
    def from_pure(cls, amplitudes) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=complex).ravel()
        if psi.size not in (2, 4):
            raise ValueError(f"pure state must have 2 or 4 amplitudes, got {psi.size}")
        nrm = float(np.vdot(psi, psi).real)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"pure state norm^2 {nrm:.12g} is not 1")
        return cls(np.outer(psi, psi.conj()))


def as_density(op) -> DensityMatrix:
    """Wrap (and validate) an array as a DensityMatrix; pass one through."""
    return op if isinstance(op, DensityMatrix) else DensityMatrix(op)


@lru_cache(maxsize=None)
def pauli_basis(n_qubits: int) -> tuple[np.ndarray, ...]:
    """Tensor products of (I, X, Y, Z) in lexicographic index order."""
    if n_qubits == 1:
        return PAULIS_1Q
    if n_qubits == 2:
        mats = tuple(np.kron(a, b) for a in PAULIS_1Q for b in PAULIS_1Q)
        for m in mats:
            m.setflags(write=False)
        return mats
    raise ValueError(f"unsupported qubit count {n_qubits}")


@lru_cache(maxsize=None)
def _pauli_stack(n_qubits: int) -> np.ndarray:
    stack = np.stack(pauli_basis(n_qubits))
    stack.setflags(write=False)
    return stack


def _qubits_for_coeffs(length: int) -> int:
    if length == 4:
        return 1
    if length == 16:
        return 2
    raise ValueError(f"coefficient vector must have length 4 or 16, got {length}")


def pauli_compose(coeffs: Sequence[float]) -> np.ndarray:
    """Assemble (1/2^n) sum_i lambda_i Sigma_i. Hermitian, not necessarily PSD."""
    lam = np.asarray(coeffs, dtype=float).ravel()
    n = _qubits_for_coeffs(lam.size)
    return np.einsum("i,iab->ab", lam, _pauli_stack(n)) / (2.0**n)


def pauli_decompose(rho) -> np.ndarray:
    """Expectation values lambda_i = Tr[rho Sigma_i] as a real vector."""
    m = _coerce_operator(rho, "rho")
    if float(np.max(np.abs(m - m.conj().T))) > 1e-8:
        raise ValueError("pauli_decompose expects a Hermitian operator")
    n = 1 if m.shape[0] == 2 else 2
    return np.einsum("iab,ba->i", _pauli_stack(n), m).real.copy()


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product of two single-qubit operators."""
    am = np.asarray(a, dtype=complex)
    bm = np.asarray(b, dtype=complex)
    if am.shape != (2, 2) or bm.shape != (2, 2):
        raise ValueError(f"tensor_product expects two 2x2 operators, got {am.shape} and {bm.shape}")
    return np.kron(am, bm)


# Indices of the t vector inside the lower-triangular T, per dimension.
# Diagonal entries come first and are real; each off-diagonal entry uses
# two consecutive slots (real, imag).
_T_OFFDIAG_4 = ((1, 0),)
_T_OFFDIAG_16 = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))


def _t_layout(length: int):
    if length == 4:
        return 2, _T_OFFDIAG_4
    if length == 16:
        return 4, _T_OFFDIAG_16
    raise ValueError(f"t vector must have length 4 or 16, got {length}")


def _t_matrix(t: np.ndarray) -> np.ndarray:
    dim, offdiag = _t_layout(t.size)
    T = np.zeros((dim, dim), dtype=complex)
    for k in range(dim):
        T[k, k] = t[k]
    pos = dim
    for (r, c) in offdiag:
        T[r, c] = t[pos] + 1j * t[pos + 1]
        pos += 2
    return T


def _t_vector(T: np.ndarray) -> np.ndarray:
    dim = T.shape[0]
    offdiag = _T_OFFDIAG_4 if dim == 2 else _T_OFFDIAG_16
    out = np.empty(dim * dim, dtype=float)
    for k in range(dim):
        out[k] = T[k, k].real
    pos = dim
    for (r, c) in offdiag:
        out[pos] = T[r, c].real
        out[pos + 1] = T[r, c].imag
        pos += 2
    return out


def _rho_from_t(t: np.ndarray) -> np.ndarray:
    """T^dag T / Tr, no validation. Fast path for likelihood loops."""
    T = _t_matrix(t)
    m = T.conj().T @ T
    tr = m.trace().real
    if tr <= 0.0 or not np.isfinite(tr):
        raise ValueError("all-zero t parameters map to a zero-trace matrix")
    return m / tr


def density_from_tparams(t: Sequence[float]) -> DensityMatrix:
    """Map any nonzero real t vector to a physical state via T^dag T / Tr."""
    tv = np.asarray(t, dtype=float).ravel()
    _t_layout(tv.size)
    if not np.any(tv):
        raise ValueError("all-zero t parameters map to a zero-trace matrix")
    return DensityMatrix(_rho_from_t(tv))


def tparams_from_density(rho) -> np.ndarray:
    """Factor rho = T^dag T with T lower triangular; return the real t vector.

    Rank-deficient states get a tiny diagonal ridge so the factorization
    exists; the result then seeds an optimizer rather than inverting exactly.
    """
    m = as_density(rho).matrix
    d = m.shape[0]
    flip = np.fliplr(np.eye(d))
    for ridge in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        try:
            L = np.linalg.cholesky(flip @ (m + ridge * np.eye(d)) @ flip)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise np.linalg.LinAlgError("could not factor density matrix")
    T = flip @ L.conj().T @ flip
    return _t_vector(T)


def _fidelity_from_product(prod: np.ndarray) -> float:
    vals = np.linalg.eigvals(prod)
    f = float(np.sqrt(np.clip(vals.real, 0.0, None)).sum() ** 2)
    return float(np.clip(f, 0.0, 1.0))


def fidelity(a, b) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2, via eig of a @ b."""
    A = as_density(a)
    B = as_density(b)
    if A.dim != B.dim:
        raise ValueError(f"fidelity needs equal dimensions, got {A.dim} and {B.dim}")
    return _fidelity_from_product(A.matrix @ B.matrix)


def purity(rho) -> float:
    m = as_density(rho).matrix
    return float(np.trace(m @ m).real)


def _z_phase_diag(thetas: Sequence[float]) -> np.ndarray:
    """Diagonal of Rz(theta_1) (x) ... for per-qubit z rotations."""
    d = np.array([1.0 + 0.0j])
    for th in thetas:
        d = np.kron(d, np.array([np.exp(-0.5j * th), np.exp(0.5j * th)]))
    return d


def _rotated_fidelity(amat: np.ndarray, bmat: np.ndarray, thetas: Sequence[float]) -> float:
    d = _z_phase_diag(thetas)
    return _fidelity_from_product(amat @ (bmat * np.outer(d, d.conj())))


def _batched_rotated_fidelity(amat: np.ndarray, bmat: np.ndarray, diags: np.ndarray) -> np.ndarray:
    # diags: (G, dim) of z-rotation diagonals; one eigvals call for the batch.
    rot = bmat[None, :, :] * (diags[:, :, None] * diags.conj()[:, None, :])
    vals = np.linalg.eigvals(amat[None, :, :] @ rot)
    f = np.sqrt(np.clip(vals.real, 0.0, None)).sum(axis=1) ** 2
    return np.clip(f, 0.0, 1.0)


def _golden_max(f: Callable[[float], float], lo: float, hi: float, iters: int = 60):
    """Golden-section maximization on [lo, hi]; returns (x_best, f_best)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        if fc >= best_f:
            best_x, best_f = c, fc
        if fd >= best_f:
            best_x, best_f = d, fd
    return best_x, best_f


# Grid densities for the z-gauge search. One angle gets the full 360-point
# scan; two angles use 90 points each (the objective has at most a few
# harmonics per angle, so this still brackets every local maximum) before
# coordinate-wise golden refinement.
_Z_GRID_1Q = 360
_Z_GRID_2Q = 90


def fidelity_up_to_z(a, b, n_qubits: int | None = None) -> tuple[float, np.ndarray]:
    """Fidelity maximized over per-qubit z rotations applied to ``b``.

    Returns ``(f_max, angles)`` with angles in [0, 2pi). This is the metric
    that ignores the z-gauge freedom left by self-calibrated reconstruction.
    """
    A = as_density(a)
    B = as_density(b)
    if A.dim != B.dim:
        raise ValueError(f"fidelity_up_to_z needs equal dimensions, got {A.dim} and {B.dim}")
    n = A.n_qubits
    if n_qubits is not None and n_qubits != n:
        raise ValueError(f"n_qubits={n_qubits} does not match operator dimension {A.dim}")
    amat, bmat = A.matrix, B.matrix

    if n == 1:
        grid = np.linspace(0.0, TWO_PI, _Z_GRID_1Q, endpoint=False)
        diags = np.stack([_z_phase_diag((th,)) for th in grid])
        f = _batched_rotated_fidelity(amat, bmat, diags)
        i = int(np.argmax(f))
        step = TWO_PI / _Z_GRID_1Q
        x, fx = _golden_max(lambda th: _rotated_fidelity(amat, bmat, (th,)), grid[i] - step, grid[i] + step)
        if fx >= f[i]:
            return float(fx), np.array([x % TWO_PI])
        return float(f[i]), np.array([grid[i] % TWO_PI])

    grid = np.linspace(0.0, TWO_PI, _Z_GRID_2Q, endpoint=False)
    d1 = np.stack([np.array([np.exp(-0.5j * th), np.exp(0.5j * th)]) for th in grid])
    diags = np.einsum("ia,jb->ijab", d1, d1).reshape(len(grid) ** 2, 4)
    f = _batched_rotated_fidelity(amat, bmat, diags)
    i = int(np.argmax(f))
    th = np.array([grid[i // len(grid)], grid[i % len(grid)]])
    best_f = float(f[i])
    step = TWO_PI / _Z_GRID_2Q
    for _ in range(3):
        for q in range(2):
            def f_q(x, q=q):
                angles = th.copy()
                angles[q] = x
                return _rotated_fidelity(amat, bmat, angles)

            x, fx = _golden_max(f_q, th[q] - step, th[q] + step)
            if fx > best_f:
                best_f, th[q] = float(fx), x
    return best_f, th % TWO_PI


_YY = np.kron(SIGMA_Y, SIGMA_Y)
_YY.setflags(write=False)


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state.

    C = max(0, l1 - l2 - l3 - l4) where l_i are the decreasingly ordered
    square roots of the eigenvalues of rho (Y(x)Y) rho* (Y(x)Y).
    """
    R = as_density(rho)
    if R.dim != 4:
        raise ValueError(f"concurrence is defined for two qubits, got dimension {R.dim}")
    m = R.matrix @ _YY @ R.matrix.conj() @ _YY
    lam = np.sqrt(np.clip(np.linalg.eigvals(m).real, 0.0, None))
    lam = np.sort(lam)[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def project_to_physical(op) -> DensityMatrix:
    """Nearest-physical repair: hermitize, clamp negative eigenvalues, renormalize."""
    m = _coerce_operator(op, "operator")
    h = (m + m.conj().T) / 2.0
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    s = float(w.sum())
    if s <= 0.0:
        w = np.ones_like(w)
        s = float(w.sum())
    w /= s
    return DensityMatrix((v * w) @ v.conj().T)
