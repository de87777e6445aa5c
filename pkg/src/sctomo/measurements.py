"""Measurement settings built from equatorial Bloch rotations.

A wave plate is modeled as R_phi(theta) = exp(-i theta (cos(phi) X + sin(phi) Y)/2)
where the axis angle phi is known and the rotation angle is either nu*alpha
with alpha the unknown retardance, or a known constant for a calibrated
plate. Each physical detector configuration pairs one rotation per qubit
with an output port of the polarizing beamsplitter: the primary port
projects onto |R><R|, the complement onto |L><L|.

This module ships the two 1-qubit protocols (self-calibrating, with five
unitaries including the double-pass 2*alpha rotations, and the calibrated
baseline with quarter-wave rotations), their 2-qubit product versions, the
design matrix used to assess tomographic completeness, and the mapping from
an excitation-pulse description to an equivalent rotation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .operators import SIGMA_0, SIGMA_X, SIGMA_Y, _pauli_stack

__all__ = [
    "PORT_PRIMARY",
    "PORT_COMPLEMENT",
    "RotationSpec",
    "MeasurementSetting",
    "SettingSet",
    "PulseSpec",
    "DesignMatrix",
    "DesignConditionWarning",
    "rotation_unitary",
    "measurement_operator",
    "sct_settings_1q",
    "st_settings_1q",
    "sct_settings_2q",
    "st_settings_2q",
    "design_matrix",
    "pulse_to_rotation",
    "SettingSetEvaluator",
    "evaluator_for",
    "setting_set_to_dict",
    "setting_set_from_dict",
    "PROTOCOLS",
]

TWO_PI = 2.0 * math.pi

PORT_PRIMARY = "primary"
PORT_COMPLEMENT = "complement"
_PORTS = (PORT_PRIMARY, PORT_COMPLEMENT)
_PORT_CODES = {PORT_PRIMARY: "p", PORT_COMPLEMENT: "c"}
_PORT_DIAGS = {
    PORT_PRIMARY: np.array([1.0, 0.0]),
    PORT_COMPLEMENT: np.array([0.0, 1.0]),
}

CONDITION_WARN_THRESHOLD = 1e6


class DesignConditionWarning(UserWarning):
    """The design matrix is close to rank deficient at the given angle."""


@dataclass(frozen=True)
class RotationSpec:
    """One wave plate: a rotation about an equatorial axis at angle phi.

    The rotation angle is nu*alpha for an uncalibrated plate, exactly
    ``fixed_angle`` for a calibrated one, and 0 when ``identity`` is set
    (no plate in the beam path).
    """

    phi: float = 0.0
    nu: float = 1.0
    identity: bool = False
    fixed_angle: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)
        object.__setattr__(self, "nu", float(self.nu))
        if self.fixed_angle is not None:
            object.__setattr__(self, "fixed_angle", float(self.fixed_angle))
        if self.nu < 0.0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")

    @property
    def alpha_dependent(self) -> bool:
        return not self.identity and self.fixed_angle is None

    def angle(self, alpha: float = 0.0) -> float:
        if self.identity:
            return 0.0
        if self.fixed_angle is not None:
            return self.fixed_angle
        return self.nu * alpha


def rotation_unitary(spec: RotationSpec, alpha: float = 0.0) -> np.ndarray:
    """cos(th/2) I - i sin(th/2) (cos(phi) X + sin(phi) Y), th = spec.angle(alpha)."""
    if spec.identity:
        return SIGMA_0.copy()
    th = spec.angle(alpha)
    axis = math.cos(spec.phi) * SIGMA_X + math.sin(spec.phi) * SIGMA_Y
    return math.cos(th / 2.0) * SIGMA_0 - 1j * math.sin(th / 2.0) * axis


@dataclass(frozen=True)
class MeasurementSetting:
    """One detector configuration: a rotation and an output port per qubit."""

    id: str
    per_qubit: tuple[RotationSpec, ...]
    ports: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_qubit", tuple(self.per_qubit))
        object.__setattr__(self, "ports", tuple(self.ports))
        if len(self.per_qubit) != len(self.ports):
            raise ValueError(f"setting {self.id!r}: {len(self.per_qubit)} rotations vs {len(self.ports)} ports")
        if len(self.per_qubit) not in (1, 2):
            raise ValueError(f"setting {self.id!r}: only 1 or 2 qubits supported")
        for p in self.ports:
            if p not in _PORTS:
                raise ValueError(f"setting {self.id!r}: unknown port {p!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.per_qubit)

    @property
    def unitary_key(self) -> tuple[RotationSpec, ...]:
        """Settings sharing this key differ only in output ports."""
        return self.per_qubit


def measurement_operator(setting: MeasurementSetting, alphas: Sequence[float] = ()) -> np.ndarray:
    """Projector U^dag(alpha) P U(alpha), tensored over qubits.

    Qubit k consumes alphas[k]; calibrated and identity rotations ignore it.
    """
    alphas = tuple(float(a) for a in alphas)
    if any(s.alpha_dependent for s in setting.per_qubit) and len(alphas) != setting.n_qubits:
        raise ValueError(
            f"setting {setting.id!r} needs {setting.n_qubits} alpha value(s), got {len(alphas)}"
        )
    mu = None
    for q, (spec, port) in enumerate(zip(setting.per_qubit, setting.ports)):
        a = alphas[q] if q < len(alphas) else 0.0
        u = rotation_unitary(spec, a)
        proj = np.diag(_PORT_DIAGS[port]).astype(complex)
        arm = u.conj().T @ proj @ u
        mu = arm if mu is None else np.kron(mu, arm)
    return mu


@dataclass(frozen=True)
class SettingSet:
    """An ordered collection of settings sharing one qubit count.

    ``n_unknowns`` counts the distinct unknown retardances; qubit arm k
    consumes alpha_k, so it is either 0 (fully calibrated) or n_qubits.
    """

    n_qubits: int
    settings: tuple[MeasurementSetting, ...]
    n_unknowns: int

    def __post_init__(self):
        object.__setattr__(self, "settings", tuple(self.settings))
        if not self.settings:
            raise ValueError("setting set is empty")
        ids = [s.id for s in self.settings]
        if len(set(ids)) != len(ids):
            raise ValueError("setting ids are not unique")
        for s in self.settings:
            if s.n_qubits != self.n_qubits:
                raise ValueError(f"setting {s.id!r} has {s.n_qubits} qubits, set declares {self.n_qubits}")
        if self.n_unknowns not in (0, self.n_qubits):
            raise ValueError(
                f"n_unknowns must be 0 or n_qubits={self.n_qubits} (one retardance per arm), got {self.n_unknowns}"
            )
        if self.n_unknowns == 0:
            for s in self.settings:
                if any(r.alpha_dependent for r in s.per_qubit):
                    raise ValueError(f"setting {s.id!r} depends on alpha but the set declares none")

    def __len__(self) -> int:
        return len(self.settings)

    def index_of(self, setting_id: str) -> int:
        for i, s in enumerate(self.settings):
            if s.id == setting_id:
                return i
        raise KeyError(f"unknown setting id {setting_id!r}")

    def unitary_groups(self) -> tuple[tuple[int, ...], ...]:
        """Indices grouped by shared rotations (same plates, different ports)."""
        groups: dict[tuple, list[int]] = {}
        order: list[tuple] = []
        for i, s in enumerate(self.settings):
            key = s.unitary_key
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(i)
        return tuple(tuple(groups[k]) for k in order)


def _product_settings(unitaries: Sequence[RotationSpec], n_qubits: int) -> list[MeasurementSetting]:
    out = []
    if n_qubits == 1:
        for k, u in enumerate(unitaries):
            for port in _PORTS:
                out.append(MeasurementSetting(f"U{k}_{_PORT_CODES[port]}", (u,), (port,)))
    else:
        for i, u1 in enumerate(unitaries):
            for j, u2 in enumerate(unitaries):
                for p1 in _PORTS:
                    for p2 in _PORTS:
                        sid = f"U{i}U{j}_{_PORT_CODES[p1]}{_PORT_CODES[p2]}"
                        out.append(MeasurementSetting(sid, (u1, u2), (p1, p2)))
    return out


def _sct_unitaries() -> tuple[RotationSpec, ...]:
    # Identity, two single-pass rotations, two double-pass (2*alpha) rotations.
    return (
        RotationSpec(identity=True, nu=0.0),
        RotationSpec(phi=0.0, nu=1.0),
        RotationSpec(phi=math.pi / 2.0, nu=1.0),
        RotationSpec(phi=math.pi, nu=2.0),
        RotationSpec(phi=3.0 * math.pi / 2.0, nu=2.0),
    )


def _st_unitaries() -> tuple[RotationSpec, ...]:
    # Calibrated quarter-wave rotations about x and y, plus the identity.
    return (
        RotationSpec(identity=True, nu=0.0),
        RotationSpec(phi=0.0, nu=0.0, fixed_angle=math.pi / 2.0),
        RotationSpec(phi=math.pi / 2.0, nu=0.0, fixed_angle=math.pi / 2.0),
    )


def sct_settings_1q() -> SettingSet:
    """Self-calibrating single-qubit protocol: 5 unitaries x 2 ports."""
    return SettingSet(1, _product_settings(_sct_unitaries(), 1), 1)


def st_settings_1q() -> SettingSet:
    """Calibrated single-qubit baseline: 3 unitaries x 2 ports, angles pi/2."""
    return SettingSet(1, _product_settings(_st_unitaries(), 1), 0)


def sct_settings_2q(pairs: Iterable[tuple[int, int]] | None = None) -> SettingSet:
    """Two-arm self-calibrating protocol: unitary pairs x 4 coincidence ports.

    By default all 25 pairs are included (over-complete, well conditioned);
    ``pairs`` selects a subset of (arm1_index, arm2_index) for pruning
    experiments.
    """
    unitaries = _sct_unitaries()
    settings = _product_settings(unitaries, 2)
    if pairs is not None:
        wanted = {(int(i), int(j)) for i, j in pairs}
        for i, j in wanted:
            if not (0 <= i < 5 and 0 <= j < 5):
                raise ValueError(f"unitary pair index ({i}, {j}) out of range")
        settings = [s for s in settings if _pair_of(s.id) in wanted]
    return SettingSet(2, settings, 2)


def _pair_of(setting_id: str) -> tuple[int, int]:
    head = setting_id.split("_")[0]
    i, j = head[1:].split("U")
    return int(i), int(j)


def st_settings_2q() -> SettingSet:
    """Calibrated two-qubit baseline: 3x3 unitary pairs x 4 ports."""
    return SettingSet(2, _product_settings(_st_unitaries(), 2), 0)


PROTOCOLS: Mapping[str, Callable[[], SettingSet]] = {
    "sct_1q": sct_settings_1q,
    "st_1q": st_settings_1q,
    "sct_2q": sct_settings_2q,
    "st_2q": st_settings_2q,
}


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Trace matrix B[j, i] = Tr[mu_j(alpha) Sigma_i] with rank diagnostics."""

    matrix: np.ndarray
    rank: int
    condition_number: float


def design_matrix(setting_set: SettingSet, alphas: Sequence[float] = ()) -> DesignMatrix:
    """Linear map from Pauli coefficients to per-setting probabilities.

    Full column rank (4^n) means the settings are tomographically complete
    at these angles. A condition number above 1e6 triggers a warning: the
    protocol is close to a degenerate point (for example alpha -> 0, where
    every rotation collapses to the identity).
    """
    stack = _pauli_stack(setting_set.n_qubits)
    rows = [
        np.einsum("ab,iba->i", measurement_operator(s, alphas), stack).real
        for s in setting_set.settings
    ]
    b = np.array(rows)
    svals = np.linalg.svd(b, compute_uv=False)
    tol = max(b.shape) * np.finfo(float).eps * svals[0]
    rank = int(np.sum(svals > tol))
    cond = float("inf") if svals[-1] <= tol else float(svals[0] / svals[-1])
    if cond > CONDITION_WARN_THRESHOLD:
        warnings.warn(
            f"design matrix condition number {cond:.3g} exceeds {CONDITION_WARN_THRESHOLD:g}"
            f" at alphas={tuple(float(a) for a in alphas)}",
            DesignConditionWarning,
            stacklevel=2,
        )
    return DesignMatrix(b, rank, cond)


class SettingSetEvaluator:
    """Vectorized Born probabilities for every setting of one set.

    Per arm we precompile the axis matrix, the port diagonal and the angle
    rule, so each call builds all rotation unitaries with one cosine/sine
    per setting and contracts them against the state in a single einsum.
    Shares no state between calls; safe to reuse concurrently.
    """

    def __init__(self, setting_set: SettingSet):
        self.setting_set = setting_set
        n = setting_set.n_qubits
        count = len(setting_set.settings)
        self._n_qubits = n
        self._base = []       # per arm: angle when not alpha-dependent
        self._scale = []      # per arm: nu where alpha-dependent, else 0
        self._axes = []       # per arm: (J, 2, 2) axis matrices
        self._pdiag = []      # per arm: (J, 2) port diagonals
        for q in range(n):
            base = np.zeros(count)
            scale = np.zeros(count)
            axes = np.zeros((count, 2, 2), dtype=complex)
            pdiag = np.zeros((count, 2))
            for j, s in enumerate(setting_set.settings):
                spec = s.per_qubit[q]
                if spec.alpha_dependent:
                    scale[j] = spec.nu
                else:
                    base[j] = spec.angle()
                axes[j] = math.cos(spec.phi) * SIGMA_X + math.sin(spec.phi) * SIGMA_Y
                pdiag[j] = _PORT_DIAGS[s.ports[q]]
            self._base.append(base)
            self._scale.append(scale)
            self._axes.append(axes)
            self._pdiag.append(pdiag)

    def _arm_mu(self, q: int, alphas: Sequence[float]) -> np.ndarray:
        a = alphas[q] if q < len(alphas) else 0.0
        th = self._base[q] + self._scale[q] * a
        c = np.cos(th / 2.0)
        s = np.sin(th / 2.0)
        u = c[:, None, None] * SIGMA_0 - 1j * s[:, None, None] * self._axes[q]
        return np.einsum("jba,jb,jbd->jad", u.conj(), self._pdiag[q], u)

    def probabilities(self, rho: np.ndarray, alphas: Sequence[float] = ()) -> np.ndarray:
        """Tr[rho mu_j(alpha)] for every setting j, as a real vector."""
        k = self.setting_set.n_unknowns
        if k and len(alphas) != k:
            raise ValueError(f"expected {k} alpha value(s), got {len(alphas)}")
        if self._n_qubits == 1:
            mu = self._arm_mu(0, alphas)
            return np.einsum("jab,ba->j", mu, rho).real
        mu1 = self._arm_mu(0, alphas)
        mu2 = self._arm_mu(1, alphas)
        rho4 = np.asarray(rho).reshape(2, 2, 2, 2)
        return np.einsum("jab,jcd,bdac->j", mu1, mu2, rho4).real


@lru_cache(maxsize=64)
def evaluator_for(setting_set: SettingSet) -> SettingSetEvaluator:
    return SettingSetEvaluator(setting_set)


@dataclass(frozen=True)
class PulseSpec:
    """Aggregate description of an excitation pulse acting on a two-level system.

    ``spectral_amplitude`` is the pulse spectral component at the transition
    frequency (field x time); ``dipole_projection`` is the projection of the
    transition dipole onto the pulse polarization and plays the role of the
    unknown angle.
    """

    spectral_amplitude: complex
    dipole_projection: float
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "spectral_amplitude", complex(self.spectral_amplitude))
        object.__setattr__(self, "dipole_projection", float(self.dipole_projection))
        object.__setattr__(self, "hbar", float(self.hbar))
        if not (self.hbar > 0.0):
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not np.isfinite([self.spectral_amplitude.real, self.spectral_amplitude.imag]).all():
            raise ValueError("spectral amplitude must be finite")


def pulse_to_rotation(pulse: PulseSpec) -> tuple[RotationSpec, float]:
    """Map a pulse to (RotationSpec, alpha): nu = 2|S|/hbar, phi = arg S.

    The rotation angle multiplier scales with the square root of pulse
    intensity, so doubling the field amplitude doubles nu while leaving the
    axis and the dipole-projection angle untouched.
    """
    s = pulse.spectral_amplitude
    nu = 2.0 * abs(s) / pulse.hbar
    if nu == 0.0:
        warnings.warn(
            "zero spectral amplitude: the pulse rotation degenerates to the identity",
            RuntimeWarning,
            stacklevel=2,
        )
        return RotationSpec(phi=0.0, nu=0.0), pulse.dipole_projection
    phi = math.atan2(s.imag, s.real) % TWO_PI
    return RotationSpec(phi=phi, nu=nu), pulse.dipole_projection


def _rotation_to_dict(spec: RotationSpec) -> dict:
    return {
        "phi": float(spec.phi),
        "nu": float(spec.nu),
        "identity": bool(spec.identity),
        "fixed_angle": None if spec.fixed_angle is None else float(spec.fixed_angle),
    }


def _rotation_from_dict(d: Mapping) -> RotationSpec:
    return RotationSpec(
        phi=float(d.get("phi", 0.0)),
        nu=float(d.get("nu", 1.0)),
        identity=bool(d.get("identity", False)),
        fixed_angle=d.get("fixed_angle", None),
    )


def setting_set_to_dict(setting_set: SettingSet) -> dict:
    return {
        "n_qubits": setting_set.n_qubits,
        "n_unknowns": setting_set.n_unknowns,
        "settings": [
            {
                "id": s.id,
                "per_qubit": [_rotation_to_dict(r) for r in s.per_qubit],
                "ports": list(s.ports),
            }
            for s in setting_set.settings
        ],
    }


def setting_set_from_dict(doc: Mapping) -> SettingSet:
    try:
        settings = tuple(
            MeasurementSetting(
                id=str(s["id"]),
                per_qubit=tuple(_rotation_from_dict(r) for r in s["per_qubit"]),
                ports=tuple(str(p) for p in s["ports"]),
            )
            for s in doc["settings"]
        )
        return SettingSet(int(doc["n_qubits"]), settings, int(doc["n_unknowns"]))
    except KeyError as exc:
        raise ValueError(f"setting set document is missing field {exc}") from exc
