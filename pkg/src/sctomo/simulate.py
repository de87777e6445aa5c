"""Forward model of the photon-counting experiment.

Expected counts follow n_j = N_j Tr[rho mu_j(alpha)] with one normalization
constant N_j per wave-plate configuration (the two beamsplitter ports of a
configuration split N_j between them). Sampled counts are Poisson draws from
a counter-based stream keyed by (seed, setting index, replicate), so any
subset of replicates can be generated in any order and still match a
sequential run bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .fileio import fmt_number, read_csv, write_csv, csv_text
from .operators import DensityMatrix, KET_H, KET_V, as_density
from .measurements import (
    SettingSet,
    evaluator_for,
    setting_set_from_dict,
    setting_set_to_dict,
    PROTOCOLS,
)

__all__ = [
    "SourceSpec",
    "CountRecord",
    "ExperimentConfig",
    "resolve_state",
    "expected_counts",
    "sample_counts",
    "poisson_draw",
    "normalization_from_complement",
    "group_normalizations",
    "fourteen_state_suite",
    "write_counts_csv",
    "read_counts_csv",
    "counts_csv_text",
    "source_to_dict",
    "source_from_dict",
    "config_to_dict",
    "config_from_dict",
]

KIND_BLOCH = "bloch_pure"
KIND_TWO_QUBIT = "two_qubit_ab"
KIND_EXPLICIT = "explicit"

_MASK64 = (1 << 64) - 1
# Second Philox key word; tags draws from this package so unrelated tools
# sharing a seed do not collide.
_KEY_TAG = 0x53435431


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Description of the prepared state.

    kinds:
      - ``bloch_pure``: cos(theta/2)|R> + e^{i phi} sin(theta/2)|L>
      - ``two_qubit_ab``: a|HH> + b|VV> in the circular product basis
      - ``explicit``: a full density matrix
    ``depolarization`` mixes the state with the maximally mixed one.
    """

    kind: str
    theta: float | None = None
    phi: float | None = None
    a: complex | None = None
    b: complex | None = None
    matrix: np.ndarray | None = None
    depolarization: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in (KIND_BLOCH, KIND_TWO_QUBIT, KIND_EXPLICIT):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not (0.0 <= self.depolarization <= 1.0):
            raise ValueError(f"depolarization must be in [0, 1], got {self.depolarization}")
        if self.kind == KIND_BLOCH:
            if self.theta is None or self.phi is None:
                raise ValueError("bloch_pure source needs theta and phi")
            if not (0.0 <= self.theta <= math.pi):
                raise ValueError(f"theta must be in [0, pi], got {self.theta}")
            if not (-math.pi <= self.phi < math.pi):
                raise ValueError(f"phi must be in [-pi, pi), got {self.phi}")
        elif self.kind == KIND_TWO_QUBIT:
            if self.a is None or self.b is None:
                raise ValueError("two_qubit_ab source needs amplitudes a and b")
            nrm = abs(self.a) ** 2 + abs(self.b) ** 2
            if abs(nrm - 1.0) > 1e-12:
                raise ValueError(f"|a|^2 + |b|^2 = {nrm:.12g} is not 1")
        else:
            if self.matrix is None:
                raise ValueError("explicit source needs a density matrix")
            object.__setattr__(self, "matrix", as_density(self.matrix).matrix)
        if not self.label:
            object.__setattr__(self, "label", self._auto_label())

    def _auto_label(self) -> str:
        if self.kind == KIND_BLOCH:
            return f"bloch_t{self.theta:.4g}_p{self.phi:.4g}"
        if self.kind == KIND_TWO_QUBIT:
            return f"ab_{abs(self.a):.4g}_{abs(self.b):.4g}"
        return "explicit"

    @property
    def n_qubits(self) -> int:
        if self.kind == KIND_BLOCH:
            return 1
        if self.kind == KIND_TWO_QUBIT:
            return 2
        return 1 if self.matrix.shape[0] == 2 else 2

    @classmethod
    def bloch(cls, theta: float, phi: float, depolarization: float = 0.0, label: str = "") -> "SourceSpec":
        return cls(KIND_BLOCH, theta=float(theta), phi=float(phi), depolarization=depolarization, label=label)

    @classmethod
    def two_qubit(cls, a: complex, b: complex, depolarization: float = 0.0, label: str = "") -> "SourceSpec":
        return cls(KIND_TWO_QUBIT, a=complex(a), b=complex(b), depolarization=depolarization, label=label)

    @classmethod
    def explicit(cls, rho, depolarization: float = 0.0, label: str = "") -> "SourceSpec":
        return cls(KIND_EXPLICIT, matrix=as_density(rho).matrix, depolarization=depolarization, label=label)


def resolve_state(source: SourceSpec) -> DensityMatrix:
    """Build the density matrix a SourceSpec describes."""
    if source.kind == KIND_BLOCH:
        psi = np.array(
            [math.cos(source.theta / 2.0), np.exp(1j * source.phi) * math.sin(source.theta / 2.0)],
            dtype=complex,
        )
        rho = np.outer(psi, psi.conj())
    elif source.kind == KIND_TWO_QUBIT:
        psi = source.a * np.kron(KET_H, KET_H) + source.b * np.kron(KET_V, KET_V)
        rho = np.outer(psi, psi.conj())
    else:
        rho = source.matrix
    p = source.depolarization
    if p > 0.0:
        dim = rho.shape[0]
        rho = (1.0 - p) * rho + p * np.eye(dim) / dim
    return DensityMatrix(rho)


@dataclass(frozen=True)
class CountRecord:
    """Counts observed (or expected) for one setting.

    ``count`` is integer valued when Poisson sampled, but stays a float so
    exact noiseless expectations can flow through the estimator unchanged.
    ``expected`` carries the underlying mean when it is known; ingested lab
    data leaves it None.
    """

    setting_id: str
    count: float
    expected: float | None = None

    def __post_init__(self):
        c = float(self.count)
        if not np.isfinite(c) or c < 0.0:
            raise ValueError(f"count for {self.setting_id!r} must be finite and >= 0, got {c}")
        object.__setattr__(self, "count", c)
        if self.expected is not None:
            object.__setattr__(self, "expected", float(self.expected))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything one simulated run needs: state, settings, truth, budget, seed."""

    source: SourceSpec
    setting_set: SettingSet
    true_alphas: tuple[float, ...]
    photons_per_setting: float
    seed: int
    photon_weights: Mapping[str, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "true_alphas", tuple(float(a) for a in self.true_alphas))
        if len(self.true_alphas) != self.setting_set.n_unknowns:
            raise ValueError(
                f"{len(self.true_alphas)} true alphas for a set with "
                f"{self.setting_set.n_unknowns} unknowns"
            )
        if not (self.photons_per_setting > 0.0):
            raise ValueError(f"photons_per_setting must be positive, got {self.photons_per_setting}")
        if self.source.n_qubits != self.setting_set.n_qubits:
            raise ValueError(
                f"source has {self.source.n_qubits} qubit(s), settings have {self.setting_set.n_qubits}"
            )
        if self.photon_weights is not None:
            ids = {s.id for s in self.setting_set.settings}
            for key, w in self.photon_weights.items():
                if key not in ids:
                    raise ValueError(f"photon weight for unknown setting {key!r}")
                if not (w > 0.0):
                    raise ValueError(f"photon weight for {key!r} must be positive")

    def _scales(self) -> np.ndarray:
        n = np.full(len(self.setting_set.settings), float(self.photons_per_setting))
        if self.photon_weights:
            for i, s in enumerate(self.setting_set.settings):
                n[i] *= self.photon_weights.get(s.id, 1.0)
        return n


def expected_counts(cfg: ExperimentConfig) -> list[CountRecord]:
    """Noiseless expectations N_j Tr[rho mu_j(alpha)] for every setting."""
    rho = resolve_state(cfg.source).matrix
    probs = evaluator_for(cfg.setting_set).probabilities(rho, cfg.true_alphas)
    if probs.min() < -1e-9 or probs.max() > 1.0 + 1e-9:
        raise RuntimeError(f"Born probabilities outside [0, 1]: [{probs.min()}, {probs.max()}]")
    # hard-zero probabilities carry O(1e-16) arithmetic debris of either sign
    probs = np.clip(probs, 0.0, 1.0)
    scales = cfg._scales()
    return [
        CountRecord(s.id, float(scales[i] * probs[i]), float(scales[i] * probs[i]))
        for i, s in enumerate(cfg.setting_set.settings)
    ]


def poisson_draw(lam: float, seed: int, setting_index: int, replicate: int = 0, stream: int = 0) -> int:
    """One Poisson draw from the stream keyed by (seed, setting, replicate, stream)."""
    if lam < 0.0:
        # tiny negative expectations are eigensolver debris on hard-zero probabilities
        if lam < -1e-9:
            raise ValueError(f"negative Poisson mean {lam}")
        lam = 0.0
    if lam == 0.0:
        return 0
    bitgen = np.random.Philox(
        key=np.array([seed & _MASK64, _KEY_TAG], dtype=np.uint64),
        counter=np.array([setting_index & _MASK64, replicate & _MASK64, stream & _MASK64, 0], dtype=np.uint64),
    )
    return int(np.random.Generator(bitgen).poisson(lam))


def sample_counts(cfg: ExperimentConfig, replicate: int = 0, stream: int = 0) -> list[CountRecord]:
    """Poisson-sampled counts; identical inputs reproduce identical records."""
    out = []
    for j, rec in enumerate(expected_counts(cfg)):
        draw = poisson_draw(rec.expected, cfg.seed, j, replicate, stream)
        out.append(CountRecord(rec.setting_id, float(draw), rec.expected))
    return out


def normalization_from_complement(
    primary: CountRecord, complement: CountRecord, setting_set: SettingSet
) -> float:
    """Per-configuration normalization from the two beamsplitter ports.

    The two port projectors of one wave-plate configuration sum to the
    identity, so their counts sum to N_j in expectation.
    """
    if setting_set.n_qubits != 1:
        raise ValueError("port-pair normalization applies to single-qubit sets; use group_normalizations")
    sp = setting_set.settings[setting_set.index_of(primary.setting_id)]
    sc = setting_set.settings[setting_set.index_of(complement.setting_id)]
    if sp.unitary_key != sc.unitary_key:
        raise ValueError(f"settings {sp.id!r} and {sc.id!r} use different rotations")
    if sp.ports == sc.ports:
        raise ValueError(f"settings {sp.id!r} and {sc.id!r} read the same port")
    total = primary.count + complement.count
    if total == 0.0:
        warnings.warn(
            f"no photons recorded for configuration of {sp.id!r}; normalization degenerate",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(total)


def group_normalizations(setting_set: SettingSet, records: Sequence[CountRecord]) -> np.ndarray:
    """Per-setting normalization: total counts of the setting's port group.

    Requires exactly one record per setting of the set. Works for any qubit
    count; for two qubits a group is the four coincidence-port combinations
    of one plate-pair configuration.
    """
    by_id = {r.setting_id: r for r in records}
    if len(by_id) != len(records):
        raise ValueError("duplicate setting ids in records")
    missing = [s.id for s in setting_set.settings if s.id not in by_id]
    if missing:
        raise ValueError(f"records missing settings: {missing[:4]}{'...' if len(missing) > 4 else ''}")
    extra = set(by_id) - {s.id for s in setting_set.settings}
    if extra:
        raise ValueError(f"records reference unknown settings: {sorted(extra)[:4]}")
    counts = np.array([by_id[s.id].count for s in setting_set.settings], dtype=float)
    norms = np.zeros_like(counts)
    for group in setting_set.unitary_groups():
        total = counts[list(group)].sum()
        if total <= 0.0:
            ids = [setting_set.settings[i].id for i in group]
            warnings.warn(
                f"no photons in port group {ids}; normalization degenerate",
                RuntimeWarning,
                stacklevel=2,
            )
        norms[list(group)] = total
    return norms


def fourteen_state_suite() -> tuple[SourceSpec, ...]:
    """The standard single-qubit test suite: 6 axis poles + 8 oblique states.

    The oblique states sit at polar angles pi/4 and 3pi/4 with azimuths
    +-pi/4 and +-3pi/4, giving 14 distinct points on the Bloch sphere.
    """
    axis = (
        SourceSpec.bloch(0.0, 0.0, label="+z"),
        SourceSpec.bloch(math.pi, 0.0, label="-z"),
        SourceSpec.bloch(math.pi / 2.0, 0.0, label="+x"),
        SourceSpec.bloch(math.pi / 2.0, -math.pi, label="-x"),
        SourceSpec.bloch(math.pi / 2.0, math.pi / 2.0, label="+y"),
        SourceSpec.bloch(math.pi / 2.0, -math.pi / 2.0, label="-y"),
    )
    oblique = tuple(
        SourceSpec.bloch(theta, phi, label=f"t{round(math.degrees(theta))}_p{round(math.degrees(phi))}")
        for theta in (math.pi / 4.0, 3.0 * math.pi / 4.0)
        for phi in (math.pi / 4.0, -math.pi / 4.0, 3.0 * math.pi / 4.0, -3.0 * math.pi / 4.0)
    )
    return axis + oblique


_COUNTS_HEADER = ["setting_id", "count", "expected"]


def counts_csv_text(records: Sequence[CountRecord]) -> str:
    rows = [[r.setting_id, fmt_number(r.count), fmt_number(r.expected)] for r in records]
    return csv_text(_COUNTS_HEADER, rows)


def write_counts_csv(path, records: Sequence[CountRecord]) -> None:
    write_csv(path, _COUNTS_HEADER, [[r.setting_id, r.count, r.expected] for r in records])


def read_counts_csv(path) -> list[CountRecord]:
    header, rows = read_csv(path)
    if header != _COUNTS_HEADER:
        raise ValueError(f"{path}: expected columns {_COUNTS_HEADER}, got {header}")
    out = []
    for row in rows:
        if len(row) != 3:
            raise ValueError(f"{path}: malformed row {row!r}")
        sid, count, expected = row
        out.append(CountRecord(sid, float(count), float(expected) if expected else None))
    return out


def _complex_to_pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def source_to_dict(source: SourceSpec) -> dict:
    d: dict = {"kind": source.kind, "depolarization": source.depolarization, "label": source.label}
    if source.kind == KIND_BLOCH:
        d["theta"] = source.theta
        d["phi"] = source.phi
    elif source.kind == KIND_TWO_QUBIT:
        d["a"] = _complex_to_pair(source.a)
        d["b"] = _complex_to_pair(source.b)
    else:
        d["matrix"] = [[_complex_to_pair(z) for z in row] for row in source.matrix]
    return d


def _pair_to_complex(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    re, im = v
    return complex(float(re), float(im))


def source_from_dict(d: Mapping) -> SourceSpec:
    kind = d.get("kind")
    depol = float(d.get("depolarization", 0.0))
    label = str(d.get("label", ""))
    if kind == KIND_BLOCH:
        return SourceSpec.bloch(float(d["theta"]), float(d["phi"]), depol, label)
    if kind == KIND_TWO_QUBIT:
        return SourceSpec.two_qubit(_pair_to_complex(d["a"]), _pair_to_complex(d["b"]), depol, label)
    if kind == KIND_EXPLICIT:
        m = np.array([[_pair_to_complex(z) for z in row] for row in d["matrix"]])
        return SourceSpec.explicit(m, depol, label)
    raise ValueError(f"unknown source kind {kind!r}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "source": source_to_dict(cfg.source),
        "settings": setting_set_to_dict(cfg.setting_set),
        "true_alphas": list(cfg.true_alphas),
        "photons_per_setting": cfg.photons_per_setting,
        "seed": cfg.seed,
        "photon_weights": dict(cfg.photon_weights) if cfg.photon_weights else None,
    }


def config_from_dict(doc: Mapping, seed_override: int | None = None) -> ExperimentConfig:
    """Build a config from a JSON document.

    Accepts either an inline ``settings`` object or a named ``protocol``
    (one of sct_1q, st_1q, sct_2q, st_2q).
    """
    for field_name in ("source", "true_alphas", "photons_per_setting"):
        if field_name not in doc:
            raise ValueError(f"config is missing field {field_name!r}")
    if "settings" in doc and doc["settings"] is not None:
        sset = setting_set_from_dict(doc["settings"])
    elif "protocol" in doc:
        name = str(doc["protocol"])
        if name not in PROTOCOLS:
            raise ValueError(f"unknown protocol {name!r}; known: {sorted(PROTOCOLS)}")
        sset = PROTOCOLS[name]()
    else:
        raise ValueError("config needs either 'settings' or 'protocol'")
    seed = seed_override if seed_override is not None else doc.get("seed")
    if seed is None:
        raise ValueError("config has no seed and none was supplied")
    weights = doc.get("photon_weights")
    return ExperimentConfig(
        source=source_from_dict(doc["source"]),
        setting_set=sset,
        true_alphas=tuple(float(a) for a in doc["true_alphas"]),
        photons_per_setting=float(doc["photons_per_setting"]),
        seed=int(seed),
        photon_weights=dict(weights) if weights else None,
    )
