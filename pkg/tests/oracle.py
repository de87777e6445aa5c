"""Independent brute-force reference implementations for the tests.

Everything here is written directly from the defining formulas with scalar
arithmetic and explicit matrix entries. It deliberately shares no code path
with the package: the package stacks settings and contracts einsums, while
this module builds each 2x2 (and hand-kroneckered 4x4) matrix one entry at a
time and sums traces in Python loops.
"""

import cmath
import math

import numpy as np
import scipy.linalg


def unitary_2x2(phi: float, angle: float) -> np.ndarray:
    """exp(-i angle (cos(phi) X + sin(phi) Y) / 2), entries written out."""
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    e_minus = cmath.exp(-1j * phi)
    e_plus = cmath.exp(1j * phi)
    return np.array(
        [
            [c, -1j * s * e_minus],
            [-1j * s * e_plus, c],
        ]
    )


def port_projector(port: str) -> np.ndarray:
    if port == "primary":
        return np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    if port == "complement":
        return np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
    raise ValueError(port)


def mu_2x2(phi: float, angle: float, port: str) -> np.ndarray:
    u = unitary_2x2(phi, angle)
    p = port_projector(port)
    return u.conj().T @ p @ u


def kron4(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for m in range(2):
                    out[2 * i + k, 2 * j + m] = a[i, j] * b[k, m]
    return out


def trace_product(a: np.ndarray, b: np.ndarray) -> complex:
    d = a.shape[0]
    total = 0.0 + 0.0j
    for i in range(d):
        for j in range(d):
            total += a[i, j] * b[j, i]
    return total


def _arm_angle(spec, alpha: float) -> float:
    if spec.identity:
        return 0.0
    if spec.fixed_angle is not None:
        return spec.fixed_angle
    return spec.nu * alpha


def expected_count(setting, rho: np.ndarray, alphas, scale: float) -> float:
    """scale * Tr[rho mu] evaluated with the scalar-arithmetic pipeline above."""
    arms = []
    for q, (spec, port) in enumerate(zip(setting.per_qubit, setting.ports)):
        alpha = alphas[q] if q < len(alphas) else 0.0
        arms.append(mu_2x2(spec.phi, _arm_angle(spec, alpha), port))
    mu = arms[0] if len(arms) == 1 else kron4(arms[0], arms[1])
    return scale * trace_product(rho, mu).real


def fidelity_qubit(a: np.ndarray, b: np.ndarray) -> float:
    """Closed form for 2x2 states: Tr[ab] + 2 sqrt(det a det b)."""
    tr = trace_product(a, b).real
    da = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]).real
    db = (b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]).real
    return float(tr + 2.0 * math.sqrt(max(da, 0.0) * max(db, 0.0)))


def fidelity_sqrtm(a: np.ndarray, b: np.ndarray) -> float:
    """Uhlmann fidelity via scipy matrix square roots (any dimension)."""
    ra = scipy.linalg.sqrtm(a)
    inner = scipy.linalg.sqrtm(ra @ b @ ra)
    return float(np.real(np.trace(inner)) ** 2)


def concurrence_pure(amplitudes) -> float:
    """2 |a00 a11 - a01 a10| for a pure two-qubit state."""
    a00, a01, a10, a11 = amplitudes
    return float(2.0 * abs(a00 * a11 - a01 * a10))


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Full-rank random state from a Ginibre matrix."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_pure(rng: np.random.Generator, dim: int) -> np.ndarray:
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)
