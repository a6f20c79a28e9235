"""Sample-complexity calculators, sphere packings and lower-bound datasets.

Everything here is a closed form or a seeded constructive procedure.  The
calculators cover the ``k = 1`` theory: the PPCA upper bound on ``n``, the
lower bound that holds for every ``epsilon``-DP algorithm, the MOD-SULQ lower
bound (up to unnamed constants) and the Fano-type bound on MOD-SULQ's
expected correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import DatasetMatrix, ParameterError, second_moment
from .mechanisms import PrivacyParams, calibrate_modsulq_noise
from .rng import make_rng

LOG8 = math.log(8.0)
UTILITY_GRID_POINTS = 10_000
# Width of the search window above the smallest admissible t; beyond it the
# (1 - phi) factor is below exp(-50).
UTILITY_T_WINDOW = 25.0


class ConstructionError(RuntimeError):
    def __init__(self, message, best_size=0):
        super().__init__(message)
        self.best_size = best_size


@dataclass(frozen=True)
class BoundQuery:
    d: int
    epsilon: float
    rho: float
    gap: float
    n: int | None = None
    delta: float | None = None
    eta: float | None = None
    lambda1: float | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ParameterError(f"d must be >= 2, got {self.d}")
        if not 0 < self.rho < 1:
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho}")
        if self.gap < 0:
            raise ParameterError(f"gap must be >= 0, got {self.gap}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class LowerBoundResult:
    threshold: float
    phi: float
    one_minus_phi: float
    valid: bool


@dataclass(frozen=True)
class UtilityBoundResult:
    bound: float
    phi: float
    degenerate: bool = False


# ---------------------------------------------------------------------------
# sample-complexity bounds


def ppca_sample_bound(q: BoundQuery) -> float:
    """Smallest-``n`` threshold above which PPCA is a ``(rho, eta)``-close approximation."""
    if q.gap <= 0:
        raise ParameterError("ppca_sample_bound needs a positive eigengap")
    if q.eta is None or q.lambda1 is None:
        raise ParameterError("ppca_sample_bound needs eta and lambda1")
    if not 0 < q.eta < 1:
        raise ParameterError(f"eta must lie in (0, 1), got {q.eta}")
    if q.lambda1 < q.gap:
        raise ParameterError("lambda1 cannot be smaller than the eigengap")
    d, eps, gap, rho = q.d, q.epsilon, q.gap, q.rho
    lead = d / (eps * gap * (1.0 - rho))
    return lead * (4.0 * math.log(1.0 / q.eta) / d
                   + 2.0 * math.log(8.0 * q.lambda1 / ((1.0 - rho * rho) * gap)))


def lower_bound_one_minus_phi(d: int) -> float:
    """``1 - phi`` with ``phi`` chosen so the packing has ``ln(K - 1) = d``."""
    log1p_exp_d = float(np.logaddexp(0.0, d))
    return math.exp(-2.0 * (LOG8 + log1p_exp_d) / (d - 2))


def general_lower_bound(q: BoundQuery) -> LowerBoundResult:
    """Sample size below which no ``epsilon``-DP algorithm reaches expected utility ``rho``.

    ``valid`` is False when the theorem's preconditions (``gap <= 1/2`` and
    ``rho >= 1 - (1 - phi)/16``) fail; the threshold is still reported.
    """
    if q.d < 3:
        raise ParameterError("general_lower_bound needs d >= 3")
    if q.gap <= 0:
        raise ParameterError("general_lower_bound needs a positive eigengap")
    omp = lower_bound_one_minus_phi(q.d)
    factor = max(1.0, math.sqrt(omp / (80.0 * (1.0 - q.rho))))
    threshold = q.d / (q.epsilon * q.gap) * factor
    valid = q.gap <= 0.5 and q.rho >= 1.0 - omp / 16.0
    return LowerBoundResult(threshold=threshold, phi=1.0 - omp, one_minus_phi=omp, valid=valid)


def modsulq_lower_bound(q: BoundQuery, c: float = 1.0, c_prime: float = 1.0) -> float:
    """``c d^{3/2} sqrt(log(d/delta)) / epsilon * (1 - c'(1 - rho))``.

    The constants are not given numerically; only the scaling is meaningful.
    """
    if q.delta is None:
        raise ParameterError("modsulq_lower_bound needs delta")
    return (c * q.d**1.5 * math.sqrt(math.log(q.d / q.delta)) / q.epsilon
            * (1.0 - c_prime * (1.0 - q.rho)))


# ---------------------------------------------------------------------------
# Fano-type utility bound for MOD-SULQ
#
# The bound is minimized over phi; we search over t = log(1/sqrt(1 - phi^2)),
# which maps [phi_lo, 1) onto [t_lo, inf) and keeps resolution when phi_lo
# is within machine epsilon of 1.


def _phi_of_t(t):
    return np.sqrt(-np.expm1(-2.0 * t))


def _one_minus_phi_of_t(t):
    e = np.exp(-2.0 * t)
    return e / (1.0 + np.sqrt(-np.expm1(-2.0 * t)))


def _t_of_phi(phi):
    return -0.5 * math.log1p(-phi * phi)


def utility_bound_phi_range(d: int, beta: float) -> tuple[float, float]:
    """Lower end of the admissible ``phi`` range, as ``(phi_lo, t_lo)``."""
    t_low = max(
        _t_of_phi(1.0 / math.sqrt(2.0 * math.pi * d)),
        math.log(8.0 * d) / (d - 1),
        (2.0 / beta**2 + math.log(256.0)) / (2.0 * (d - 1)),
    )
    return float(_phi_of_t(t_low)), t_low


def utility_bound_objective_t(t, d: int, beta: float):
    c = 1.0 / beta**2 + math.log(2.0)
    inner = 1.0 - c / ((d - 1) * np.asarray(t) - LOG8)
    return 1.0 - _one_minus_phi_of_t(t) / 4.0 * inner**2


def utility_bound_objective(phi, d: int, beta: float):
    """The expression minimized over ``phi`` (evaluated directly in ``phi``)."""
    phi = np.asarray(phi, dtype=float)
    c = 1.0 / beta**2 + math.log(2.0)
    log_k = (d - 1) * (-0.5 * np.log1p(-phi * phi)) - LOG8
    return 1.0 - (1.0 - phi) / 4.0 * (1.0 - c / log_k) ** 2


def _golden_section(f, lo, hi, tol=1e-13, max_iter=200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def modsulq_utility_bound(d: int, n: int, epsilon: float, delta: float,
                          grid_points: int = UTILITY_GRID_POINTS) -> UtilityBoundResult:
    """Upper bound on ``E|<vhat_1, v_1>|`` achievable by MOD-SULQ on a worst-case dataset."""
    beta = calibrate_modsulq_noise(d, n, PrivacyParams(epsilon, delta)).beta
    if not math.isfinite(beta) or beta <= 0:
        raise ParameterError(f"noise level beta={beta} is not usable")
    phi_lo, t_lo = utility_bound_phi_range(d, beta)
    if phi_lo >= 1.0:
        return UtilityBoundResult(bound=1.0, phi=1.0, degenerate=True)
    f = lambda t: float(utility_bound_objective_t(t, d, beta))  # noqa: E731
    grid = np.linspace(t_lo, t_lo + UTILITY_T_WINDOW, grid_points)
    vals = utility_bound_objective_t(grid, d, beta)
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_points - 1)]
    t_best, v_best = _golden_section(f, lo, hi)
    if vals[i] < v_best:
        t_best, v_best = float(grid[i]), float(vals[i])
    v_best = min(1.0, v_best)
    return UtilityBoundResult(bound=v_best, phi=float(_phi_of_t(t_best)))


# ---------------------------------------------------------------------------
# packings


@dataclass(frozen=True, eq=False)
class PackingSet:
    vectors: np.ndarray  # shape (K, d)
    phi: float
    method: str = "random"

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim != 2:
            raise ParameterError("packing vectors must be a (K, d) array")
        if np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0), initial=0.0) > 1e-10:
            raise ParameterError("packing vectors must have unit norm")
        if max_coherence(v) >= self.phi:
            raise ParameterError("packing violates the coherence bound")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def max_coherence(vectors: np.ndarray) -> float:
    """Largest ``|<mu, nu>|`` over distinct pairs (0 for fewer than two vectors)."""
    if len(vectors) < 2:
        return 0.0
    g = np.abs(vectors @ vectors.T)
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def packing_size_formula(d: int, phi: float) -> float:
    """``K = (1/8) (1 - phi^2)^{-(d-1)/2}``, the guaranteed packing size (not floored)."""
    if not (1.0 / math.sqrt(2.0 * math.pi * d) <= phi < 1.0):
        raise ParameterError(f"phi must lie in [(2 pi d)^(-1/2), 1), got {phi}")
    log_k = (d - 1) * (-0.5 * math.log1p(-phi * phi)) - LOG8
    try:
        return math.exp(log_k)
    except OverflowError:
        # beyond the float range the size is unbounded for every practical purpose
        return math.inf


def basis_packing_phi(d: int) -> float:
    """Coherence level at which the size formula gives ``K = d``."""
    return math.sqrt(-math.expm1(-2.0 * math.log(8.0 * d) / (d - 1)))


def packing_batch_size(d: int, phi: float, t: float = 0.5) -> int:
    psi = math.exp((d - 1) / 2.0 * math.log1p(-phi * phi))
    return int(math.ceil(1.0 + t * math.log(2.0) / psi))


def construct_packing(d: int, phi: float, target_k: int, seed, max_attempts: int = 100,
                      max_batch: int = 1_000_000) -> PackingSet:
    """Greedy random packing with pairwise ``|<mu, nu>| < phi``.

    Targets of at most ``d`` vectors are met by the standard basis.  Otherwise
    batches of uniform vectors are drawn and each one is kept if it is
    ``phi``-incoherent with everything kept so far.
    """
    if not 0 < phi < 1:
        raise ParameterError(f"phi must lie in (0, 1), got {phi}")
    if target_k < 1:
        raise ParameterError("target_k must be >= 1")
    if target_k <= d:
        return PackingSet(np.eye(d)[:target_k], phi, method="basis")
    rng = make_rng(seed)
    batch = min(packing_batch_size(d, phi), max_batch)
    kept = np.empty((0, d))
    for _ in range(max_attempts):
        z = rng.standard_normal((batch, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        for row in z:
            if kept.shape[0] == 0 or np.max(np.abs(kept @ row)) < phi:
                kept = np.vstack([kept, row])
                if kept.shape[0] >= target_k:
                    return PackingSet(kept, phi, method="random")
    raise ConstructionError(
        f"reached {kept.shape[0]} of {target_k} vectors after {max_attempts} batches of {batch}",
        best_size=kept.shape[0])


# ---------------------------------------------------------------------------
# adversarial datasets


@dataclass(frozen=True, eq=False)
class AdversarialDataset:
    data: DatasetMatrix
    index: int
    packing: PackingSet
    construction: str  # "main" or "beta-exceeds-gap"
    gap: float
    realized_gap: float
    beta: float
    beta_effective: float
    n_base: int
    n_perturbed: int
    m: float | None = None
    telemetry: dict = field(default_factory=dict)

    def closed_form_eigen(self) -> tuple[float, float, np.ndarray]:
        """Top two eigenvalues and the top eigenvector predicted by the construction."""
        d = self.data.d
        w = _embedded(self.packing, self.index, d)
        if self.construction == "main":
            be = self.beta_effective
            a = (1.0 - be) * self.m + be / 2.0
            b = c = be / 2.0
            root = math.sqrt((a - c) ** 2 + 4.0 * b * b)
            lam = 0.5 * (a + c) + 0.5 * root
            lam2 = 0.5 * (a + c) - 0.5 * root
            y = np.zeros(d)
            y[-1] = 1.0
            u = b * y + (lam - a) * w
            return lam, lam2, u / np.linalg.norm(u)
        return self.gap, 0.0, w


def _embedded(packing: PackingSet, index: int, d: int) -> np.ndarray:
    vec = packing.vectors[index]
    if packing.d == d - 1:
        return np.append(vec, 0.0)
    if packing.d == d:
        if abs(vec[-1]) > 1e-12:
            raise ParameterError("packing vectors must be orthogonal to e_d")
        return vec.copy()
    raise ParameterError(f"packing dimension {packing.d} does not fit d={d}")


def adversarial_dataset(d: int, n: int, epsilon: float, gap: float, index: int,
                        packing: PackingSet) -> AdversarialDataset:
    """Dataset ``D_i`` from the lower-bound construction, with eigengap exactly ``gap``.

    ``floor(n(1 - beta))`` base records and the remaining ``n_perturbed``
    records built from packing vector ``w_i``; datasets for different ``i``
    differ only in the perturbed block (the last columns).  The construction
    uses the realized fraction ``beta_effective = n_perturbed / n`` so the gap
    is exact despite rounding.
    """
    if d < 3:
        raise ParameterError("adversarial_dataset needs d >= 3")
    if not 0 < gap <= 0.5:
        raise ParameterError(f"gap must lie in (0, 1/2], got {gap}")
    if not 0 <= index < len(packing):
        raise ParameterError(f"index {index} out of range for packing of size {len(packing)}")
    w = _embedded(packing, index, d)
    beta = d / (n * epsilon)
    n_base = int(math.floor(n * (1.0 - beta))) if beta < 1 else 0
    n_pert = n - n_base
    remainder = n * (1.0 - beta) - n_base if beta < 1 else 0.0
    beta_eff = n_pert / n
    y = np.zeros(d)
    y[-1] = 1.0
    x = np.zeros((d, n))
    if beta_eff <= gap:
        m = math.sqrt(gap * gap - beta_eff * beta_eff) / (1.0 - beta_eff)
        x[:, :n_base] = (math.sqrt(m) * y)[:, None]
        x[:, n_base:] = ((y + w) / math.sqrt(2.0))[:, None]
        construction = "main"
    else:
        m = None
        x[:, n_base:] = (math.sqrt(gap / beta_eff) * w)[:, None]
        construction = "beta-exceeds-gap"
    data = DatasetMatrix(x, provenance={"construction": construction, "index": index})
    lam = second_moment(data).eigenvalues
    return AdversarialDataset(
        data=data, index=index, packing=packing, construction=construction, gap=gap,
        realized_gap=float(lam[0] - lam[1]), beta=beta, beta_effective=beta_eff,
        n_base=n_base, n_perturbed=n_pert, m=m,
        telemetry={"rounding_remainder": remainder, "nominal_beta_exceeds_gap": beta > gap})


# ---------------------------------------------------------------------------
# small lemmas


def gaussian_kl(a, b, sigma) -> float:
    """``KL(N(a, S) || N(b, S)) = (a - b)^T S^{-1} (a - b) / 2``."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    s = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise ParameterError("sigma must be positive definite") from exc
    z = np.linalg.solve(chol, diff)
    return 0.5 * float(z @ z)


@dataclass(frozen=True)
class CapMeasureResult:
    estimate: float
    stderr: float
    lower: float
    upper: float
    within_bracket: bool


def cap_measure_bounds(d: int, c: float) -> tuple[float, float]:
    lower = 0.5 * math.exp(-(d - 1) / 2.0 * math.log(2.0 / (1.0 - c)))
    upper = math.exp(-d * c * c / 2.0)
    return lower, upper


def cap_measure_mc(d: int, c: float, samples: int, seed, slack: float = 3.0) -> CapMeasureResult:
    """Monte Carlo estimate of the uniform measure of ``{v : <v, e_1> >= c}``.

    Only the first coordinate of a uniform point is needed; it is drawn as
    ``g / sqrt(g^2 + chi2_{d-1})``.
    """
    if not 0 <= c < 1:
        raise ParameterError(f"c must lie in [0, 1), got {c}")
    if samples < 10_000:
        raise ParameterError("cap_measure_mc needs at least 10^4 samples")
    rng = make_rng(seed)
    g = rng.standard_normal(samples)
    rest = rng.chisquare(d - 1, samples) if d > 1 else np.zeros(samples)
    first = g / np.sqrt(g * g + rest)
    p = float(np.mean(first >= c))
    se = math.sqrt(max(p * (1.0 - p), 1.0 / samples) / samples)
    lower, upper = cap_measure_bounds(d, c)
    ok = (p + slack * se >= lower) and (p - slack * se <= upper)
    return CapMeasureResult(estimate=p, stderr=se, lower=lower, upper=upper, within_bracket=ok)
