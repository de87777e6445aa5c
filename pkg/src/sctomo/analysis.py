"""Experiment runners and statistics: angle sweeps, noise sweeps with
histograms, protocol comparison, and Poisson-resampling error bars.

Sweep cells are keyed by (axis value, state label, seed, replicate) and every
cell is an independent simulate + reconstruct cycle, so identical inputs give
byte-identical reports. Estimator failures inside a sweep are recorded in the
cell instead of aborting the run.

In simulation the true state is available, so sweep fidelities are measured
against the truth (maximized over the z gauge). The protocol comparison keeps
the lab-style convention instead and compares the self-calibrated
reconstruction against the calibrated one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimate import (
    LikelihoodModel,
    OptimizerConfig,
    ReconstructionResult,
    mle_sct,
    mle_st,
)
from .measurements import SettingSet, sct_settings_1q
from .operators import (
    DensityMatrix,
    as_density,
    concurrence,
    fidelity_up_to_z,
    fidelity,
    pauli_decompose,
)
from .simulate import (
    CountRecord,
    ExperimentConfig,
    SourceSpec,
    expected_counts,
    poisson_draw,
    resolve_state,
    sample_counts,
)

__all__ = [
    "SweepCell",
    "SweepPoint",
    "SweepReport",
    "ErrorBars",
    "CompareResult",
    "retardance_sweep",
    "noise_sweep",
    "bloch_coordinates",
    "compare_sct_st",
    "monte_carlo_errors",
    "fidelity_bin_edges",
    "alpha_bin_edges",
    "histogram_counts",
    "report_cell_rows",
    "report_histogram_rows",
    "report_summary",
    "CELL_HEADER",
    "HISTOGRAM_HEADER",
]

# Poisson sub-streams, so different uses of one seed never share draws.
_STREAM_EXPERIMENT = 0
_STREAM_ST_ARM = 1
_STREAM_RESAMPLE = 2

NOISELESS = float("inf")


@dataclass(frozen=True)
class SweepCell:
    """One simulate + reconstruct outcome inside a sweep."""

    state_label: str
    seed: int
    replicate: int
    fidelity: float
    alpha_hat: tuple[float, ...]
    final_L: float
    converged: bool
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class SweepPoint:
    axis_value: float
    cells: tuple[SweepCell, ...]

    def fidelities(self) -> list[float]:
        return [c.fidelity for c in self.cells if c.ok]

    def alpha_hats(self) -> list[tuple[float, ...]]:
        return [c.alpha_hat for c in self.cells if c.ok]


@dataclass(frozen=True)
class SweepReport:
    axis: str
    points: tuple[SweepPoint, ...]
    seeds_used: tuple[int, ...]


def _run_cell(
    source: SourceSpec,
    setting_set: SettingSet,
    alphas: tuple[float, ...],
    photons: float,
    seed: int,
    replicate: int,
    opt: OptimizerConfig | None,
    noiseless: bool,
) -> SweepCell:
    label = source.label
    try:
        cfg = ExperimentConfig(source, setting_set, alphas, photons, max(seed, 0))
        records = expected_counts(cfg) if noiseless else sample_counts(cfg, replicate, _STREAM_EXPERIMENT)
        model = LikelihoodModel.from_records(setting_set, records)
        result = mle_sct(model, opt)
        truth = resolve_state(source)
        f, _ = fidelity_up_to_z(truth, result.rho_hat)
        return SweepCell(
            state_label=label,
            seed=seed,
            replicate=replicate,
            fidelity=float(f),
            alpha_hat=tuple(float(a) for a in result.alpha_hat),
            final_L=float(result.final_L),
            converged=result.converged,
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        return SweepCell(
            state_label=label,
            seed=seed,
            replicate=replicate,
            fidelity=float("nan"),
            alpha_hat=(),
            final_L=float("nan"),
            converged=False,
            error=f"{type(exc).__name__}: {exc}",
        )


def retardance_sweep(
    states: Sequence[SourceSpec],
    alphas: Sequence[float],
    photons: float,
    seeds: Sequence[int | None],
    setting_set: SettingSet | None = None,
    opt: OptimizerConfig | None = None,
) -> SweepReport:
    """Reconstruction quality versus the plate angle.

    One cell per (alpha, state, seed); a seed of None runs the noiseless
    expectations instead of Poisson samples. Angle values must lie in
    (0, pi].
    """
    sset = setting_set if setting_set is not None else sct_settings_1q()
    for a in alphas:
        if not (0.0 < a <= math.pi):
            raise ValueError(f"sweep alphas must lie in (0, pi], got {a}")
    points = []
    for a in alphas:
        cells = []
        for src in states:
            for seed in seeds:
                noiseless = seed is None
                # noiseless cells are marked with seed -1 in the report
                cells.append(
                    _run_cell(
                        src,
                        sset,
                        (float(a),) * sset.n_unknowns,
                        photons,
                        -1 if noiseless else int(seed),
                        0,
                        opt,
                        noiseless,
                    )
                )
        points.append(SweepPoint(float(a), tuple(cells)))
    return SweepReport("alpha", tuple(points), tuple(int(s) for s in seeds if s is not None))


def noise_sweep(
    state: SourceSpec,
    alpha: float,
    photon_levels: Sequence[float],
    runs_per_level: int,
    seed: int = 0,
    setting_set: SettingSet | None = None,
    opt: OptimizerConfig | None = None,
    include_noiseless_level: bool = False,
) -> SweepReport:
    """Repeated reconstruction at several photon budgets.

    Runs ``runs_per_level`` independent replicates per level (replicate index
    keys the count stream). ``include_noiseless_level`` appends a single
    pseudo-level at axis value inf where the exact expectations are used.
    """
    if runs_per_level < 1:
        raise ValueError(f"runs_per_level must be >= 1, got {runs_per_level}")
    if not photon_levels:
        raise ValueError("photon_levels is empty")
    sset = setting_set if setting_set is not None else sct_settings_1q()
    alphas = (float(alpha),) * sset.n_unknowns
    points = []
    for level in photon_levels:
        cells = tuple(
            _run_cell(state, sset, alphas, float(level), seed, r, opt, noiseless=False)
            for r in range(runs_per_level)
        )
        points.append(SweepPoint(float(level), cells))
    if include_noiseless_level:
        cells = (_run_cell(state, sset, alphas, float(photon_levels[-1]), seed, 0, opt, noiseless=True),)
        points.append(SweepPoint(NOISELESS, cells))
    return SweepReport("photons", tuple(points), (int(seed),))


def bloch_coordinates(rho) -> tuple[float, float, float]:
    """(x, y, z) Pauli expectations of a single-qubit state."""
    dm = as_density(rho)
    if dm.dim != 2:
        raise ValueError(f"bloch_coordinates needs a single qubit, got dimension {dm.dim}")
    lam = pauli_decompose(dm.matrix)
    return (float(lam[1]), float(lam[2]), float(lam[3]))


@dataclass(frozen=True)
class ErrorBars:
    """Mean and sample standard deviation of one scalar over resamples."""

    quantity: str
    mean: float
    std: float
    n_resamples: int
    label: str = ""
    low_confidence: bool = False
    n_failures: int = 0

    def __post_init__(self):
        if self.n_resamples < 2:
            raise ValueError(f"error bars need at least 2 resamples, got {self.n_resamples}")
        if not (self.std >= 0.0):
            raise ValueError(f"std must be non-negative, got {self.std}")
        if not self.label:
            object.__setattr__(self, "label", self.quantity)


_KNOWN_QUANTITIES = ("fidelity", "concurrence", "alpha")


def monte_carlo_errors(
    model: LikelihoodModel,
    opt: OptimizerConfig | None,
    n_resamples: int,
    quantities: Sequence[str],
    seed: int = 0,
    reference: ReconstructionResult | None = None,
) -> list[ErrorBars]:
    """Poisson-resampling error bars around the point estimate.

    Each resample redraws every count as Poisson(n_j), rebuilds the model
    (normalizations included) and reruns the estimator. ``fidelity`` is
    measured against the reference reconstruction (computed from the
    original counts when not supplied), maximized over the z gauge for
    self-calibrated sets. Failed resamples are counted and skipped; bars
    from fewer than 10 successes are flagged low confidence.
    """
    if n_resamples < 2:
        raise ValueError(f"n_resamples must be >= 2, got {n_resamples}")
    for q in quantities:
        if q not in _KNOWN_QUANTITIES:
            raise ValueError(f"unknown quantity {q!r}; known: {_KNOWN_QUANTITIES}")
    sset = model.setting_set
    self_calibrating = sset.n_unknowns > 0
    if "concurrence" in quantities and sset.n_qubits != 2:
        raise ValueError("concurrence error bars need a two-qubit setting set")
    estimate = mle_sct if self_calibrating else mle_st
    if reference is None:
        reference = estimate(model, opt)

    samples: dict[str, list[float]] = {}
    n_failures = 0
    for r in range(n_resamples):
        counts = [
            float(poisson_draw(model.counts[j], seed, j, r, _STREAM_RESAMPLE))
            for j in range(len(sset.settings))
        ]
        records = [CountRecord(s.id, c) for s, c in zip(sset.settings, counts)]
        try:
            m = LikelihoodModel.from_records(sset, records, model.sigma_floor)
            res = estimate(m, opt)
            if not res.converged:
                raise RuntimeError("estimator did not converge")
        except (ValueError, RuntimeError, np.linalg.LinAlgError):
            n_failures += 1
            continue
        for q in quantities:
            if q == "fidelity":
                if self_calibrating:
                    f, _ = fidelity_up_to_z(reference.rho_hat, res.rho_hat)
                else:
                    f = fidelity(reference.rho_hat, res.rho_hat)
                samples.setdefault("fidelity", []).append(float(f))
            elif q == "concurrence":
                samples.setdefault("concurrence", []).append(concurrence(res.rho_hat))
            else:
                for i, a in enumerate(res.alpha_hat):
                    samples.setdefault(f"alpha[{i}]", []).append(float(a))

    bars = []
    for q in quantities:
        keys = [q] if q != "alpha" else sorted(k for k in samples if k.startswith("alpha["))
        if q == "alpha" and not keys:
            keys = ["alpha[0]"]
        for key in keys:
            vals = np.asarray(samples.get(key, []), dtype=float)
            if vals.size < 2:
                raise RuntimeError(
                    f"only {vals.size} successful resample(s) for {key}; cannot form error bars"
                )
            bars.append(
                ErrorBars(
                    quantity=q,
                    mean=float(vals.mean()),
                    std=float(vals.std(ddof=1)),
                    n_resamples=int(vals.size),
                    label=key,
                    low_confidence=vals.size < 10,
                    n_failures=n_failures,
                )
            )
    return bars


@dataclass(frozen=True, eq=False)
class CompareResult:
    """Self-calibrated versus calibrated reconstruction of one source."""

    c_sct: float
    c_st: float
    f_between: float
    alpha_hat: tuple[float, ...]
    rho_sct: DensityMatrix
    rho_st: DensityMatrix
    bars: tuple[ErrorBars, ...]


def compare_sct_st(
    source: SourceSpec,
    set_sct: SettingSet,
    set_st: SettingSet,
    true_alphas: Sequence[float],
    photons: float,
    seed: int,
    opt_sct: OptimizerConfig | None = None,
    opt_st: OptimizerConfig | None = None,
    mc_resamples: int = 0,
    noiseless: bool = False,
) -> CompareResult:
    """Run both protocols on the same source and compare the entanglement.

    Reports both concurrences and the fidelity between the reconstructions,
    maximized over z rotations on the self-calibrated side (its z gauge is
    unobservable). ``mc_resamples`` >= 2 adds Poisson error bars for the
    concurrences and the recovered angles. ``noiseless`` feeds both
    estimators the exact expectations instead of Poisson samples.
    """
    if source.n_qubits != 2:
        raise ValueError("compare_sct_st needs a two-qubit source")
    cfg_sct = ExperimentConfig(source, set_sct, tuple(true_alphas), photons, seed)
    cfg_st = ExperimentConfig(source, set_st, (), photons, seed)
    if noiseless:
        rec_sct = expected_counts(cfg_sct)
        rec_st = expected_counts(cfg_st)
    else:
        rec_sct = sample_counts(cfg_sct, 0, _STREAM_EXPERIMENT)
        rec_st = sample_counts(cfg_st, 0, _STREAM_ST_ARM)
    model_sct = LikelihoodModel.from_records(set_sct, rec_sct)
    model_st = LikelihoodModel.from_records(set_st, rec_st)
    res_sct = mle_sct(model_sct, opt_sct)
    res_st = mle_st(model_st, opt_st)
    f_between, _ = fidelity_up_to_z(res_st.rho_hat, res_sct.rho_hat)
    bars: list[ErrorBars] = []
    if mc_resamples >= 2:
        for quantity_set, model, opt, ref, tag in (
            (("concurrence", "alpha"), model_sct, opt_sct, res_sct, "sct"),
            (("concurrence",), model_st, opt_st, res_st, "st"),
        ):
            for bar in monte_carlo_errors(model, opt, mc_resamples, quantity_set, seed, ref):
                bars.append(
                    ErrorBars(
                        quantity=bar.quantity,
                        mean=bar.mean,
                        std=bar.std,
                        n_resamples=bar.n_resamples,
                        label=f"{tag}.{bar.label}",
                        low_confidence=bar.low_confidence,
                        n_failures=bar.n_failures,
                    )
                )
    return CompareResult(
        c_sct=concurrence(res_sct.rho_hat),
        c_st=concurrence(res_st.rho_hat),
        f_between=float(f_between),
        alpha_hat=tuple(float(a) for a in res_sct.alpha_hat),
        rho_sct=res_sct.rho_hat,
        rho_st=res_st.rho_hat,
        bars=tuple(bars),
    )


def fidelity_bin_edges() -> np.ndarray:
    """Fixed fidelity bins: width 0.01 on [0, 1]."""
    return np.linspace(0.0, 1.0, 101)


def alpha_bin_edges() -> np.ndarray:
    """Fixed angle bins: width pi/128 on (0, pi]."""
    return np.linspace(0.0, math.pi, 129)


def histogram_counts(values: Sequence[float], edges: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
    return counts


CELL_HEADER = [
    "axis",
    "axis_value",
    "state",
    "seed",
    "replicate",
    "fidelity",
    "alpha_hat",
    "final_L",
    "converged",
    "error",
]

HISTOGRAM_HEADER = ["axis_value", "quantity", "bin_left", "bin_right", "count"]


def report_cell_rows(report: SweepReport) -> list[list]:
    rows = []
    for point in report.points:
        for c in point.cells:
            rows.append(
                [
                    report.axis,
                    point.axis_value,
                    c.state_label,
                    c.seed,
                    c.replicate,
                    c.fidelity,
                    ";".join(repr(a) for a in c.alpha_hat),
                    c.final_L,
                    c.converged,
                    c.error or "",
                ]
            )
    return rows


def report_histogram_rows(report: SweepReport) -> list[list]:
    """Fixed-bin histograms of fidelity and recovered angle, one row per bin."""
    f_edges = fidelity_bin_edges()
    a_edges = alpha_bin_edges()
    rows = []
    for point in report.points:
        fvals = point.fidelities()
        avals = [a for al in point.alpha_hats() for a in al]
        for name, edges, vals in (("fidelity", f_edges, fvals), ("alpha", a_edges, avals)):
            counts = histogram_counts(vals, edges)
            for i, n in enumerate(counts):
                rows.append([point.axis_value, name, float(edges[i]), float(edges[i + 1]), int(n)])
    return rows


def report_summary(report: SweepReport) -> dict:
    points = []
    for point in report.points:
        f = np.asarray(point.fidelities(), dtype=float)
        alphas = point.alpha_hats()
        flat = np.asarray([a for al in alphas for a in al], dtype=float)
        points.append(
            {
                "axis_value": point.axis_value,
                "n_cells": len(point.cells),
                "n_failed": sum(1 for c in point.cells if not c.ok),
                "fidelity_mean": float(f.mean()) if f.size else None,
                "fidelity_median": float(np.median(f)) if f.size else None,
                "fidelity_min": float(f.min()) if f.size else None,
                "alpha_mean": float(flat.mean()) if flat.size else None,
                "alpha_std": float(flat.std(ddof=1)) if flat.size > 1 else None,
            }
        )
    return {"axis": report.axis, "points": points, "seeds_used": list(report.seeds_used)}
