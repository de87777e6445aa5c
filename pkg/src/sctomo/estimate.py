"""Maximum-likelihood reconstruction with and without calibrated settings.

The state is parameterized as rho(t) = T^dag T / Tr[T^dag T] with T lower
triangular, so any real t vector is physical. The objective is the Gaussian
weighted squared residual

    L(t, alpha) = sum_j (n_j - N_j Tr[rho(t) mu_j(alpha)])^2 / (2 sigma_j^2)

with sigma_j^2 = max(n_j, sigma_floor); the floor keeps zero-count settings
from blowing up the weights. Calibrated reconstruction minimizes over t
only; self-calibrated reconstruction minimizes jointly over (t, alpha),
seeding from linear inversion on an alpha grid because the landscape grows
extra local minima as counting noise increases.

Counts determine (rho, alpha) only up to negating alpha_k together with a
pi rotation about z on qubit k, so alpha is reported as a magnitude in
(0, pi] and the returned state is the representative on that branch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .measurements import DesignConditionWarning, SettingSet, design_matrix, evaluator_for
from .operators import (
    DensityMatrix,
    SIGMA_Z,
    _rho_from_t,
    density_from_tparams,
    pauli_compose,
    project_to_physical,
    tparams_from_density,
)
from .simulate import CountRecord, group_normalizations

__all__ = [
    "DegenerateDesignError",
    "LikelihoodModel",
    "OptimizerConfig",
    "ReconstructionResult",
    "likelihood",
    "likelihood_gradient_fd",
    "linear_inversion",
    "mle_st",
    "mle_sct",
    "reconstruct_from_records",
    "result_to_dict",
    "result_from_dict",
]

TWO_PI = 2.0 * math.pi


class DegenerateDesignError(ValueError):
    """The design matrix is rank deficient: the data cannot fix the state."""


def _default_alpha_grid() -> tuple[float, ...]:
    return tuple(math.pi * k / 12.0 for k in range(1, 13))


@dataclass(frozen=True)
class OptimizerConfig:
    """Multi-start search policy.

    ``n_starts`` is the total start budget; for the self-calibrating search
    it is spread over ``alpha_grid`` (default 24 = 12 grid points x 2 state
    seeds). ``purity_prior``, when set, adds a quadratic penalty pushing
    Tr[rho^2] above the given floor; it is the standard remedy when heavy
    counting noise produces spurious likelihood minima.
    """

    n_starts: int = 24
    alpha_grid: tuple[float, ...] = field(default_factory=_default_alpha_grid)
    tolerance: float = 1e-9
    max_evals: int = 50000
    purity_prior: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if self.n_starts < 1:
            raise ValueError(f"n_starts must be >= 1, got {self.n_starts}")
        if not self.alpha_grid:
            raise ValueError("alpha_grid is empty")
        for a in self.alpha_grid:
            if not (0.0 < a <= math.pi):
                raise ValueError(f"alpha grid values must lie in (0, pi], got {a}")
        if not (self.tolerance > 0.0):
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_evals < 100:
            raise ValueError(f"max_evals too small: {self.max_evals}")
        if self.purity_prior is not None and not (0.0 < self.purity_prior <= 1.0):
            raise ValueError(f"purity_prior must be in (0, 1], got {self.purity_prior}")


class LikelihoodModel:
    """Counts, normalizations and weights bound to one setting set.

    ``normalizations`` holds the per-setting N_j (constant within a port
    group when derived from complements). The Gaussian scale prefactor of
    the likelihood is a constant and is dropped: it cannot move the minimum.
    """

    def __init__(
        self,
        setting_set: SettingSet,
        counts: Sequence[float],
        normalizations: Sequence[float],
        sigma_floor: float = 1.0,
    ):
        counts = np.asarray(counts, dtype=float)
        norms = np.asarray(normalizations, dtype=float)
        j = len(setting_set.settings)
        if counts.shape != (j,) or norms.shape != (j,):
            raise ValueError(f"need {j} counts and normalizations, got {counts.shape} and {norms.shape}")
        if np.any(counts < 0.0) or not np.all(np.isfinite(counts)):
            raise ValueError("counts must be finite and non-negative")
        if np.any(norms <= 0.0):
            raise ValueError("normalizations must be positive")
        if not (sigma_floor > 0.0):
            raise ValueError(f"sigma_floor must be positive, got {sigma_floor}")
        self.setting_set = setting_set
        self.counts = counts
        self.counts.setflags(write=False)
        self.normalizations = norms
        self.normalizations.setflags(write=False)
        self.sigma_floor = float(sigma_floor)
        self._denom = 2.0 * np.maximum(counts, sigma_floor)
        self._evaluator = evaluator_for(setting_set)

    @classmethod
    def from_records(
        cls,
        setting_set: SettingSet,
        records: Sequence[CountRecord],
        sigma_floor: float = 1.0,
    ) -> "LikelihoodModel":
        """Build a model with normalizations taken from the port-group sums."""
        norms = group_normalizations(setting_set, records)
        by_id = {r.setting_id: r for r in records}
        counts = [by_id[s.id].count for s in setting_set.settings]
        return cls(setting_set, counts, norms, sigma_floor)

    def expected(self, rho: np.ndarray, alphas: Sequence[float]) -> np.ndarray:
        return self.normalizations * self._evaluator.probabilities(rho, alphas)

    def residual_sum(self, rho: np.ndarray, alphas: Sequence[float]) -> float:
        r = self.counts - self.expected(rho, alphas)
        return float(np.sum(r * r / self._denom))


def likelihood(t: Sequence[float], alphas: Sequence[float], model: LikelihoodModel) -> float:
    """Weighted squared-residual objective; invariant under rescaling t."""
    tv = np.asarray(t, dtype=float).ravel()
    return model.residual_sum(_rho_from_t(tv), tuple(alphas))


def likelihood_gradient_fd(
    t: Sequence[float],
    alphas: Sequence[float],
    model: LikelihoodModel,
    eps: float = 1e-6,
) -> np.ndarray:
    """Central finite-difference gradient of the likelihood over (t, alphas).

    Check utility only; the search itself is derivative free.
    """
    x = np.concatenate([np.asarray(t, float).ravel(), np.asarray(alphas, float).ravel()])
    nt = np.asarray(t).size

    def f(v: np.ndarray) -> float:
        return likelihood(v[:nt], v[nt:], model)

    g = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[i] += eps
        dn[i] -= eps
        g[i] = (f(up) - f(dn)) / (2.0 * eps)
    return g


def linear_inversion(model: LikelihoodModel, alphas: Sequence[float] = ()) -> np.ndarray:
    """Least-squares Pauli coefficients at the given angles, lambda_0 pinned to 1.

    The output may be unphysical under noise; it exists to seed the
    maximum-likelihood search and for diagnostics.
    """
    sset = model.setting_set
    dim_coeff = 4 ** sset.n_qubits
    dm = design_matrix(sset, alphas)
    if dm.rank < dim_coeff:
        raise DegenerateDesignError(
            f"design matrix rank {dm.rank} < {dim_coeff} at alphas={tuple(float(a) for a in alphas)}"
        )
    y = model.counts / model.normalizations
    scale = 2.0 ** sset.n_qubits
    a = dm.matrix[:, 1:] / scale
    b = y - dm.matrix[:, 0] / scale
    rest, *_ = np.linalg.lstsq(a, b, rcond=None)
    return np.concatenate([[1.0], rest])


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    """Best state and angle estimate plus the per-start landscape."""

    rho_hat: DensityMatrix
    alpha_hat: np.ndarray
    final_L: float
    start_results: tuple[tuple[float, tuple[float, ...]], ...]
    converged: bool
    ambiguity_note: str
    n_evals: int = 0
    n_degenerate_starts: int = 0

    def __post_init__(self):
        a = np.asarray(self.alpha_hat, dtype=float).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "alpha_hat", a)
        object.__setattr__(self, "start_results", tuple(self.start_results))


_AMBIGUITY_NOTE = (
    "alpha reported as a magnitude in (0, pi]; counts are invariant under "
    "negating alpha_k together with a pi rotation about z on qubit k, so the "
    "conjugate branch describes the same data"
)

# Internal search staging: a cheap ranking pass over all starts, then a tight
# polish of the best few. Budgets are fractions of OptimizerConfig.max_evals.
_COARSE_FRACTION = 0.4
_COARSE_FATOL = 1e-4
_POLISH_TOP = 3
_XATOL = 1e-7
_PURITY_PENALTY_WEIGHT = 1e6
# Fixed key for start perturbations: reruns on identical data must be
# bit-identical, and OptimizerConfig carries no RNG state.
_PERTURB_KEY = 0x7455


def _nm(fun, x0: np.ndarray, maxfev: int, fatol: float):
    return minimize(
        fun,
        x0,
        method="Nelder-Mead",
        options={
            "maxfev": int(max(maxfev, 10)),
            "fatol": fatol,
            "xatol": _XATOL,
            "adaptive": x0.size > 8,
        },
    )


def _make_objective(model: LikelihoodModel, nt: int, purity_prior: float | None):
    expected = model.expected
    counts = model.counts
    denom = model._denom

    def f(x: np.ndarray) -> float:
        t = x[:nt]
        al = x[nt:]
        try:
            rho = _rho_from_t(t)
        except ValueError:
            return float("inf")
        r = counts - expected(rho, al)
        val = float(np.sum(r * r / denom))
        if purity_prior is not None:
            p = float(np.trace(rho @ rho).real)
            gap = purity_prior - p
            if gap > 0.0:
                val += _PURITY_PENALTY_WEIGHT * gap * gap
        return val

    return f


def _normalized(t: np.ndarray) -> np.ndarray:
    nrm = float(np.linalg.norm(t))
    return t / nrm if nrm > 0 else t


def _perturbed(t: np.ndarray, rng: np.random.Generator, scale: float = 0.35) -> np.ndarray:
    return _normalized(t + scale * rng.standard_normal(t.size) / math.sqrt(t.size))


def _physical_seed_t(model: LikelihoodModel, alphas: Sequence[float]) -> np.ndarray:
    # Probing grid angles is expected to hit near-degenerate points; the
    # conditioning warning is for direct design_matrix users, not this loop.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DesignConditionWarning)
        lam = linear_inversion(model, alphas)
    rho = project_to_physical(pauli_compose(lam))
    return _normalized(tparams_from_density(rho))


def _fold_alpha(a: float) -> tuple[float, bool]:
    """Reduce to the canonical magnitude in (0, pi]; flag a branch flip."""
    r = math.remainder(a, TWO_PI)
    if r < 0.0:
        return -r, True
    return r, False


def _z_conjugate(rho: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    z = SIGMA_Z if n_qubits == 1 else (
        np.kron(SIGMA_Z, np.eye(2)) if qubit == 0 else np.kron(np.eye(2), SIGMA_Z)
    )
    return z @ rho @ z


def _fold_branch(t: np.ndarray, alphas: np.ndarray, n_qubits: int) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Canonicalize (t, alpha): alpha magnitudes in (0, pi], state on the matching branch."""
    rho = _rho_from_t(t)
    out = np.empty_like(alphas)
    flipped: list[int] = []
    for q, a in enumerate(alphas):
        mag, flip = _fold_alpha(float(a))
        out[q] = mag
        if flip:
            rho = _z_conjugate(rho, q, n_qubits)
            flipped.append(q)
    t_new = _normalized(tparams_from_density(project_to_physical(rho)))
    return t_new, out, flipped


@dataclass(eq=False)
class _Start:
    L: float
    x: np.ndarray
    nfev: int
    success: bool
    alpha0: tuple[float, ...]

    def folded_alphas(self) -> tuple[float, ...]:
        return tuple(_fold_alpha(float(a))[0] for a in self.x[len(self.x) - len(self.alpha0):]) if self.alpha0 else ()


def _sort_key(L: float, alphas: tuple[float, ...], t: np.ndarray):
    # min L; ties toward smaller angles then lexicographic t, so parallel and
    # serial runs pick the same winner.
    return (L, alphas, tuple(np.round(_normalized(t), 12)))


def mle_st(model: LikelihoodModel, opt: OptimizerConfig | None = None) -> ReconstructionResult:
    """Calibrated maximum likelihood: minimize over the state only.

    Starts from linear inversion projected to the nearest physical state,
    plus randomly perturbed copies; the best start wins.
    """
    opt = opt or OptimizerConfig()
    sset = model.setting_set
    if sset.n_unknowns != 0:
        raise ValueError(f"mle_st needs a calibrated setting set, this one has {sset.n_unknowns} unknowns")
    nt = 4 ** sset.n_qubits
    t0 = _physical_seed_t(model, ())
    rng = np.random.Generator(np.random.Philox(key=_PERTURB_KEY))
    seeds = [t0] + [_perturbed(t0, rng) for _ in range(opt.n_starts - 1)]
    objective = _make_objective(model, nt, opt.purity_prior)
    coarse_budget = max(50, int(_COARSE_FRACTION * opt.max_evals) // opt.n_starts)

    starts: list[_Start] = []
    for t_seed in seeds:
        res = _nm(objective, t_seed, coarse_budget, _COARSE_FATOL)
        starts.append(_Start(float(res.fun), np.asarray(res.x), int(res.nfev), bool(res.success), ()))

    used = sum(s.nfev for s in starts)
    order = sorted(range(len(starts)), key=lambda i: _sort_key(starts[i].L, (), starts[i].x[:nt]))
    top = order[: min(_POLISH_TOP, len(order))]
    polish_budget = max(100, (opt.max_evals - used) // len(top))
    for i in top:
        res = _nm(objective, starts[i].x, polish_budget, opt.tolerance)
        starts[i] = _Start(float(res.fun), np.asarray(res.x), starts[i].nfev + int(res.nfev), bool(res.success), ())

    best = min(starts, key=lambda s: _sort_key(s.L, (), s.x[:nt]))
    t_best = _normalized(best.x[:nt])
    return ReconstructionResult(
        rho_hat=density_from_tparams(t_best),
        alpha_hat=np.zeros(0),
        final_L=best.L,
        start_results=tuple((s.L, ()) for s in starts),
        converged=best.success,
        ambiguity_note="",
        n_evals=sum(s.nfev for s in starts),
    )


def mle_sct(model: LikelihoodModel, opt: OptimizerConfig | None = None) -> ReconstructionResult:
    """Self-calibrating maximum likelihood: minimize jointly over (t, alpha).

    Every grid angle is seeded by linear inversion at that angle (grid
    points where the design matrix degenerates are skipped), explored with a
    cheap ranking pass, and the best few candidates are polished to the
    requested tolerance. ``start_results`` keeps one (L, alpha) entry per
    start so secondary likelihood minima remain visible to callers.
    """
    opt = opt or OptimizerConfig()
    sset = model.setting_set
    k = sset.n_unknowns
    if k < 1:
        raise ValueError("mle_sct needs a setting set with unknown angles; use mle_st instead")
    nt = 4 ** sset.n_qubits
    rng = np.random.Generator(np.random.Philox(key=_PERTURB_KEY))
    seeds_per_alpha = max(1, opt.n_starts // len(opt.alpha_grid))
    n_planned = len(opt.alpha_grid) * seeds_per_alpha
    coarse_budget = max(50, int(_COARSE_FRACTION * opt.max_evals) // n_planned)
    objective = _make_objective(model, nt, opt.purity_prior)

    starts: list[_Start] = []
    degenerate = 0
    for a0 in opt.alpha_grid:
        alphas0 = np.full(k, a0)
        try:
            t_li = _physical_seed_t(model, alphas0)
        except DegenerateDesignError:
            degenerate += 1
            continue
        for s_idx in range(seeds_per_alpha):
            t_seed = t_li if s_idx == 0 else _perturbed(t_li, rng)
            x0 = np.concatenate([t_seed, alphas0])
            res = _nm(objective, x0, coarse_budget, _COARSE_FATOL)
            starts.append(
                _Start(float(res.fun), np.asarray(res.x), int(res.nfev), bool(res.success), tuple(alphas0))
            )
    if not starts:
        raise DegenerateDesignError(
            "design matrix is rank deficient at every alpha grid point; "
            "this state/protocol combination cannot be inverted"
        )

    used = sum(s.nfev for s in starts)
    order = sorted(range(len(starts)), key=lambda i: _sort_key(starts[i].L, starts[i].folded_alphas(), starts[i].x[:nt]))
    top = order[: min(_POLISH_TOP, len(order))]
    polish_budget = max(100, (opt.max_evals - used) // len(top))
    for i in top:
        res = _nm(objective, starts[i].x, polish_budget, opt.tolerance)
        starts[i] = _Start(
            float(res.fun), np.asarray(res.x), starts[i].nfev + int(res.nfev), bool(res.success), starts[i].alpha0
        )

    best = min(starts, key=lambda s: _sort_key(s.L, s.folded_alphas(), s.x[:nt]))
    t_fold, alpha_fold, flipped = _fold_branch(best.x[:nt], best.x[nt:], sset.n_qubits)
    note = _AMBIGUITY_NOTE
    if flipped:
        note += f"; branch folded on qubit(s) {flipped}"
    return ReconstructionResult(
        rho_hat=density_from_tparams(t_fold),
        alpha_hat=alpha_fold,
        final_L=best.L,
        start_results=tuple((s.L, s.folded_alphas()) for s in starts),
        converged=best.success,
        ambiguity_note=note,
        n_evals=sum(s.nfev for s in starts),
        n_degenerate_starts=degenerate,
    )


def reconstruct_from_records(
    setting_set: SettingSet,
    records: Sequence[CountRecord],
    mode: str | None = None,
    opt: OptimizerConfig | None = None,
    sigma_floor: float = 1.0,
) -> ReconstructionResult:
    """Convenience wrapper: build the model and dispatch on the set's unknowns."""
    if mode is None:
        mode = "sct" if setting_set.n_unknowns else "st"
    if mode not in ("sct", "st"):
        raise ValueError(f"mode must be 'sct' or 'st', got {mode!r}")
    if mode == "st" and setting_set.n_unknowns != 0:
        raise ValueError("mode 'st' requires a calibrated setting set (n_unknowns=0)")
    if mode == "sct" and setting_set.n_unknowns == 0:
        raise ValueError("mode 'sct' requires a setting set with unknown angles")
    model = LikelihoodModel.from_records(setting_set, records, sigma_floor)
    return mle_sct(model, opt) if mode == "sct" else mle_st(model, opt)


def result_to_dict(result: ReconstructionResult) -> dict:
    m = result.rho_hat.matrix
    return {
        "rho_hat": [[[float(z.real), float(z.imag)] for z in row] for row in m],
        "alpha_hat": [float(a) for a in result.alpha_hat],
        "final_L": float(result.final_L),
        "converged": bool(result.converged),
        "start_results": [[float(L), [float(a) for a in al]] for L, al in result.start_results],
        "ambiguity_note": result.ambiguity_note,
        "n_evals": int(result.n_evals),
        "n_degenerate_starts": int(result.n_degenerate_starts),
    }


def result_from_dict(doc: dict) -> ReconstructionResult:
    m = np.array([[complex(re, im) for re, im in row] for row in doc["rho_hat"]])
    return ReconstructionResult(
        rho_hat=DensityMatrix(m),
        alpha_hat=np.asarray(doc.get("alpha_hat", []), dtype=float),
        final_L=float(doc["final_L"]),
        start_results=tuple((float(L), tuple(float(a) for a in al)) for L, al in doc.get("start_results", [])),
        converged=bool(doc["converged"]),
        ambiguity_note=str(doc.get("ambiguity_note", "")),
        n_evals=int(doc.get("n_evals", 0)),
        n_degenerate_starts=int(doc.get("n_degenerate_starts", 0)),
    )
