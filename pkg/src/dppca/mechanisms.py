"""Differentially private PCA mechanisms and baselines.

All mechanisms share one calling convention and return a
:class:`MechanismOutput`:

* ``run_exact``: non-private top-k eigenvectors.
* ``run_modsulq``: input perturbation, symmetric Gaussian noise on ``A``;
  ``(epsilon, delta)``-DP.
* ``run_ppca``: exponential mechanism, one draw from ``BMF(n eps/2 A)``;
  ``epsilon``-DP when the chain has mixed.
* ``run_random_projection``: data-independent Haar frame.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import bingham
from .linalg import (
    DatasetMatrix,
    OrthonormalFrame,
    ParameterError,
    SecondMomentMatrix,
    second_moment,
    symmetrize,
    top_k_subspace,
)
from .rng import make_rng

DELTA_MAX = 3.0 / math.sqrt(2.0 * math.pi * math.e)
MECHANISMS = ("exact", "modsulq", "ppca", "randproj")


class UnboundedDataWarning(UserWarning):
    """A mechanism ran on data whose column norms were not checked against 1."""


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float | None = None

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be positive and finite, got {self.epsilon}")
        if self.delta is not None and not 0 < self.delta < DELTA_MAX:
            raise ParameterError(f"delta must lie in (0, {DELTA_MAX:.4f}), got {self.delta}")


@dataclass(frozen=True)
class NoiseCalibration:
    beta: float
    gamma: float


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = bingham.DEFAULT_ITERATIONS
    thin: int | None = None  # None: keep only the final state
    init: str = "uniform"
    max_proposals: int = bingham.MAX_PROPOSALS

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("sampler iterations must be >= 1")
        if self.thin is not None and self.thin < 1:
            raise ParameterError("sampler thin must be >= 1")


@dataclass(frozen=True, eq=False)
class MechanismOutput:
    frame: OrthonormalFrame
    mechanism: str
    params: PrivacyParams | None
    seed: int | None
    telemetry: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ParameterError(f"unknown mechanism tag {self.mechanism!r}")

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "params": None if self.params is None else asdict(self.params),
            "seed": self.seed,
            "telemetry": self.telemetry,
            "d": self.frame.d,
            "k": self.frame.k,
            "frame": self.frame.columns.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, obj: dict) -> "MechanismOutput":
        params = obj.get("params")
        return cls(
            frame=OrthonormalFrame(np.array(obj["frame"], dtype=float)),
            mechanism=obj["mechanism"],
            params=None if params is None else PrivacyParams(**params),
            seed=obj.get("seed"),
            telemetry=dict(obj.get("telemetry", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "MechanismOutput":
        return cls.from_dict(json.loads(text))


def _log_term(d: int, delta: float) -> float:
    return math.log((d * d + d) / (delta * 2.0 * math.sqrt(2.0 * math.pi)))


def calibrate_modsulq_noise(d: int, n: int, params: PrivacyParams) -> NoiseCalibration:
    """Per-entry noise standard deviation for MOD-SULQ.

    ``beta = (d+1)/(n eps) sqrt(2 log((d^2+d)/(2 delta sqrt(2 pi)))) + 1/(n sqrt(eps))``
    and the tail threshold ``gamma = beta sqrt(2 log(...))`` used in the
    privacy argument.
    """
    if d < 2:
        raise ParameterError("MOD-SULQ calibration needs d >= 2")
    if n < 1:
        raise ParameterError("n must be >= 1")
    if params.delta is None:
        raise ParameterError("MOD-SULQ requires delta (it is (epsilon, delta)-DP)")
    eps = params.epsilon
    root = math.sqrt(2.0 * _log_term(d, params.delta))
    beta = (d + 1) / (n * eps) * root + 1.0 / (n * math.sqrt(eps))
    return NoiseCalibration(beta=beta, gamma=beta * root)


def check_modsulq_privacy_inequality(d: int, n: int, params: PrivacyParams) -> tuple[bool, float]:
    """Check ``(1/(2 beta^2)) (2(d+1) gamma/n + 2/n^2) <= epsilon``.

    Returns ``(holds, margin)`` with ``margin = epsilon - lhs``.
    """
    cal = calibrate_modsulq_noise(d, n, params)
    lhs = (2.0 * (d + 1) * cal.gamma / n + 2.0 / n**2) / (2.0 * cal.beta**2)
    margin = params.epsilon - lhs
    return margin >= 0.0, margin


def symmetric_noise(d: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric matrix with i.i.d. ``N(0, beta^2)`` entries on and above the diagonal."""
    g = rng.standard_normal((d, d)) * beta
    return symmetrize(g)


def _moment(data: DatasetMatrix) -> SecondMomentMatrix:
    if not data.bounded:
        warnings.warn("data was built without the unit column-norm check; "
                      "privacy guarantees do not apply", UnboundedDataWarning, stacklevel=3)
    return second_moment(data)


def _check_k(k: int, d: int):
    if not 1 <= k <= d:
        raise ParameterError(f"k must be in [1, {d}], got {k}")


def run_exact(data: DatasetMatrix, k: int) -> MechanismOutput:
    a = second_moment(data)
    _check_k(k, a.d)
    return MechanismOutput(top_k_subspace(a, k), "exact", None, None, {})


def run_modsulq(data: DatasetMatrix, k: int, params: PrivacyParams, seed) -> MechanismOutput:
    a = _moment(data)
    _check_k(k, a.d)
    cal = calibrate_modsulq_noise(a.d, data.n, params)
    rng = make_rng(seed)
    noisy = SecondMomentMatrix.from_matrix(a.entries + symmetric_noise(a.d, cal.beta, rng))
    telemetry = {"beta": cal.beta, "gamma": cal.gamma, "n": data.n}
    return MechanismOutput(top_k_subspace(noisy, k), "modsulq", params,
                           seed if isinstance(seed, int) else None, telemetry)


def run_ppca(data: DatasetMatrix, k: int, params: PrivacyParams, seed: int,
             sampler: SamplerConfig | None = None) -> MechanismOutput:
    """Release the final state of a Gibbs chain targeting ``BMF(n (eps/2) A)``."""
    sampler = sampler or SamplerConfig()
    a = _moment(data)
    _check_k(k, a.d)
    b = data.n * (params.epsilon / 2.0) * a.entries
    thin = sampler.thin or sampler.iterations
    trace = bingham.sample_matrix_bingham(
        bingham.BinghamParam(b, k), iterations=sampler.iterations, thin=thin,
        seed=int(seed), init=sampler.init, max_proposals=sampler.max_proposals)
    f_tail = trace.running_f[-min(10, trace.iterations):]
    telemetry = {
        "iterations": trace.iterations,
        "thin": thin,
        "acceptance_rate": trace.diagnostics["acceptance_rate"],
        "proposals": trace.diagnostics["proposals"],
        "burnin_f_tail": [float(x) for x in f_tail],
        "n": data.n,
    }
    return MechanismOutput(trace.final_frame(), "ppca", params, int(seed), telemetry)


def run_random_projection(d: int, k: int, seed) -> MechanismOutput:
    frame = bingham.uniform_frame(d, k, make_rng(seed))
    return MechanismOutput(frame, "randproj", None,
                           seed if isinstance(seed, int) else None, {})
