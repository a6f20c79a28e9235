"""Sampling from the (matrix) Bingham distribution.

The density of a ``d x k`` orthonormal frame ``V`` is proportional to
``exp(tr(V^T B V))``.  For ``k = 1`` draws are exact, by rejection from an
angular central Gaussian envelope (Kent, Ganeiber and Mardia, 2018).  For
``k > 1`` a column-wise Gibbs sampler (Hoff, 2009) resamples one column at a
time from its exact conditional, which is again a vector Bingham law on the
sphere orthogonal to the other columns.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .linalg import OrthonormalFrame, ParameterError, symmetrize
from .rng import make_rng

MAX_PROPOSALS = 1_000_000
DEFAULT_ITERATIONS = 20_000
REORTHONORMALIZE_EVERY = 500


class SamplerError(RuntimeError):
    """Rejection sampler exceeded its proposal budget."""

    def __init__(self, message, *, proposals, draws, sweep=None, column=None):
        super().__init__(message)
        self.proposals = proposals
        self.draws = draws
        self.sweep = sweep
        self.column = column

    @property
    def acceptance_rate(self) -> float:
        return self.draws / self.proposals if self.proposals else 0.0


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _solve_envelope_b(a):
    # Root of sum_i 1/(b + 2 a_i) = 1 on [1, q]; min(a) == 0 so g(1) >= 0.
    q = a.size
    b = 1.0
    for _ in range(200):
        g = -1.0
        dg = 0.0
        for i in range(q):
            t = 1.0 / (b + 2.0 * a[i])
            g += t
            dg -= t * t
        if g <= 0.0 or dg == 0.0:
            break
        step = g / dg
        b_new = b - step
        if b_new > q:
            b_new = float(q)
        if abs(b_new - b) <= 1e-14 * b:
            b = b_new
            break
        b = b_new
    return b


@njit(cache=True)
def _draw_eigbasis(evals, evecs, rng, max_proposals, out):
    """One exact draw from density exp(z^T C z), C = evecs diag(evals) evecs^T.

    Writes the sample into ``out`` and returns the number of proposals used,
    or -1 if the budget ran out.
    """
    q = evals.size
    top = evals.max()
    a = np.empty(q)
    for i in range(q):
        a[i] = top - evals[i]
    b = _solve_envelope_b(a)
    omega = np.empty(q)
    sd = np.empty(q)
    for i in range(q):
        omega[i] = 1.0 + 2.0 * a[i] / b
        sd[i] = 1.0 / math.sqrt(omega[i])
    log_m = -0.5 * (q - b) + 0.5 * q * math.log(q / b)
    x = np.empty(q)
    for it in range(1, max_proposals + 1):
        nrm2 = 0.0
        for i in range(q):
            x[i] = sd[i] * rng.standard_normal()
            nrm2 += x[i] * x[i]
        if nrm2 == 0.0:
            continue
        inv = 1.0 / math.sqrt(nrm2)
        t = 0.0
        xo = 0.0
        for i in range(q):
            x[i] *= inv
            t += a[i] * x[i] * x[i]
            xo += omega[i] * x[i] * x[i]
        log_ratio = -t + 0.5 * q * math.log(xo) - log_m
        if math.log(rng.random()) < log_ratio:
            for r in range(out.size):
                s = 0.0
                for i in range(q):
                    s += evecs[r, i] * x[i]
                out[r] = s
            return it
    return -1


@njit(cache=True)
def _vector_bingham_batch(evals, evecs, rng, count, max_proposals):
    d = evecs.shape[0]
    out = np.empty((count, d))
    total = 0
    for j in range(count):
        used = _draw_eigbasis(evals, evecs, rng, max_proposals, out[j])
        if used < 0:
            return out, total + max_proposals, j
        total += used
    return out, total, count


@njit(cache=True)
def _reorthonormalize(v, w):
    d, k = v.shape
    full = np.empty((d, d))
    full[:, :k] = v
    full[:, k:] = w
    q, r = np.linalg.qr(full)
    for j in range(d):
        if r[j, j] < 0:
            q[:, j] = -q[:, j]
    v[:, :] = q[:, :k]
    w[:, :] = q[:, k:]


@njit(cache=True)
def _gibbs_chain(bmat, v, w, iterations, thin, rng, max_proposals, reortho_every):
    d, k = v.shape
    m = d - k + 1
    n_store = iterations // thin
    frames = np.empty((n_store, d, k))
    fvals = np.empty(iterations)
    running = np.zeros((d, k))
    basis = np.empty((d, m))
    z = np.empty(m)
    proposals = 0
    draws = 0
    stored = 0
    sqrt_k = math.sqrt(k)
    for sweep in range(iterations):
        for r in range(k):
            basis[:, 0] = v[:, r]
            basis[:, 1:] = w
            cond = basis.T @ (bmat @ basis)
            cond = 0.5 * (cond + cond.T)
            evals, evecs = np.linalg.eigh(cond)
            used = _draw_eigbasis(evals, evecs, rng, max_proposals, z)
            if used < 0:
                return frames, fvals, proposals + max_proposals, draws, sweep, r
            proposals += used
            draws += 1
            # Reflector H with H e_1 = sgn*z, chosen to avoid cancellation.
            sgn = -1.0 if z[0] > 0 else 1.0
            u = z.copy()
            u[0] -= sgn
            unorm = math.sqrt(np.sum(u * u))
            if unorm > 0.0:
                u /= unorm
                bu = basis @ u
                for i in range(d):
                    for j in range(m):
                        basis[i, j] -= 2.0 * bu[i] * u[j]
                v[:, r] = sgn * basis[:, 0]
            else:
                v[:, r] = sgn * basis[:, 0]
            w[:, :] = basis[:, 1:]
        if reortho_every > 0 and (sweep + 1) % reortho_every == 0:
            _reorthonormalize(v, w)
        running += v
        fvals[sweep] = math.sqrt(np.sum(running * running)) / (sqrt_k * (sweep + 1))
        if (sweep + 1) % thin == 0 and stored < n_store:
            frames[stored] = v
            stored += 1
    return frames, fvals, proposals, draws, -1, -1


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True, eq=False)
class BinghamParam:
    """Exponent matrix ``B`` and target column count ``k``."""

    B: np.ndarray
    k: int

    def __post_init__(self):
        b = np.array(self.B, dtype=float, copy=True)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ParameterError(f"B must be square, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ParameterError("B contains non-finite entries")
        b = symmetrize(b)
        if not 1 <= self.k <= b.shape[0]:
            raise ParameterError(f"k must be in [1, {b.shape[0]}], got {self.k}")
        b.setflags(write=False)
        object.__setattr__(self, "B", b)

    @property
    def d(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True, eq=False)
class ChainTrace:
    """Stored (thinned) states of one Gibbs chain, shape ``(len, d, k)``."""

    frames: np.ndarray
    seed: int
    thin: int
    iterations: int
    running_f: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def d(self) -> int:
        return self.frames.shape[1]

    @property
    def k(self) -> int:
        return self.frames.shape[2]

    def frame(self, i: int) -> OrthonormalFrame:
        return OrthonormalFrame(self.frames[i])

    def final_frame(self) -> OrthonormalFrame:
        return self.frame(-1)

    def to_csv(self, path) -> None:
        """One frame per row, entries row-major; a comment header carries metadata."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# d={self.d},k={self.k},seed={self.seed},thin={self.thin},"
                     f"iterations={self.iterations}\n")
            writer = csv.writer(fh)
            writer.writerow([f"v_{i}_{j}" for i in range(self.d) for j in range(self.k)])
            for f in self.frames:
                writer.writerow([repr(float(x)) for x in f.ravel()])

    @classmethod
    def from_csv(cls, path) -> "ChainTrace":
        with open(path, newline="") as fh:
            header = fh.readline().lstrip("#").strip()
            meta = dict(item.split("=") for item in header.split(","))
            reader = csv.reader(fh)
            next(reader)
            rows = [list(map(float, row)) for row in reader]
        d, k = int(meta["d"]), int(meta["k"])
        frames = np.array(rows, dtype=float).reshape(-1, d, k)
        return cls(frames, int(meta["seed"]), int(meta["thin"]), int(meta["iterations"]))


@dataclass(frozen=True)
class BurninDiagnostic:
    values: list[tuple[int, float]]

    @property
    def checkpoints(self) -> np.ndarray:
        return np.array([t for t, _ in self.values])

    @property
    def f(self) -> np.ndarray:
        return np.array([f for _, f in self.values])


def sample_vector_bingham(B, seed, count: int, max_proposals: int = MAX_PROPOSALS) -> np.ndarray:
    """``count`` exact draws from the density proportional to ``exp(v^T B v)``.

    Returns an array of shape ``(count, d)``.
    """
    b = np.asarray(B, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ParameterError("B must be a square matrix")
    if np.max(np.abs(b - b.T), initial=0.0) > 1e-12 * max(1.0, np.abs(b).max()):
        raise ParameterError("B must be symmetric")
    evals, evecs = np.linalg.eigh(symmetrize(b))
    rng = make_rng(seed)
    out, proposals, done = _vector_bingham_batch(
        evals, np.ascontiguousarray(evecs), rng, int(count), int(max_proposals))
    if done < count:
        raise SamplerError(
            f"rejection budget of {max_proposals} proposals exhausted on draw {done}",
            proposals=proposals, draws=done)
    return out


def uniform_frame(d: int, k: int, seed) -> OrthonormalFrame:
    """Haar-distributed ``d x k`` frame (QR of a Gaussian matrix, sign-fixed)."""
    if not 1 <= k <= d:
        raise ParameterError(f"uniform_frame needs 1 <= k <= d, got d={d}, k={k}")
    rng = make_rng(seed)
    g = rng.standard_normal((d, k))
    q, r = np.linalg.qr(g)
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return OrthonormalFrame(q)


def sample_matrix_bingham(param: BinghamParam, iterations: int = DEFAULT_ITERATIONS,
                          thin: int = 1, seed: int = 0, init="uniform",
                          max_proposals: int = MAX_PROPOSALS) -> ChainTrace:
    """Run one column-wise Gibbs chain targeting ``BMF_k(B)``.

    ``init`` is an :class:`OrthonormalFrame` or ``"uniform"`` (a Haar start
    drawn from the chain's own stream).  One iteration is one full cyclic pass
    over the ``k`` columns; every ``thin``-th state is stored.
    """
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    if thin < 1:
        raise ParameterError("thin must be >= 1")
    if not isinstance(seed, (int, np.integer)):
        raise ParameterError("sample_matrix_bingham needs an integer seed")
    d, k = param.d, param.k
    rng = make_rng(int(seed), "gibbs")
    if isinstance(init, str):
        if init != "uniform":
            raise ParameterError(f"unknown init {init!r}")
        v0 = uniform_frame(d, k, rng).columns
    else:
        if (init.d, init.k) != (d, k):
            raise ParameterError(f"init frame is {init.d}x{init.k}, expected {d}x{k}")
        v0 = init.columns
    q, _ = np.linalg.qr(v0, mode="complete")
    v = np.array(v0, dtype=float, order="C")
    w = np.ascontiguousarray(q[:, k:])
    frames, fvals, proposals, draws, bad_sweep, bad_col = _gibbs_chain(
        np.ascontiguousarray(param.B), v, w, int(iterations), int(thin), rng,
        int(max_proposals), REORTHONORMALIZE_EVERY)
    if bad_sweep >= 0:
        raise SamplerError(
            f"rejection budget exhausted at sweep {bad_sweep}, column {bad_col}",
            proposals=proposals, draws=draws, sweep=bad_sweep, column=bad_col)
    diagnostics = {
        "proposals": int(proposals),
        "draws": int(draws),
        "acceptance_rate": draws / proposals if proposals else 1.0,
    }
    return ChainTrace(frames, int(seed), int(thin), int(iterations), fvals, diagnostics)


def burnin_statistic(trace: ChainTrace, checkpoints: Sequence[int]) -> BurninDiagnostic:
    """``F(T) = ||(1/T) sum_{t<=T} X(t)||_F / sqrt(k)`` over the stored frames."""
    if len(trace) == 0:
        raise ParameterError("trace is empty")
    cps = [int(t) for t in checkpoints]
    if any(t < 1 or t > len(trace) for t in cps):
        raise ParameterError(f"checkpoints must lie in [1, {len(trace)}]")
    csum = np.cumsum(trace.frames, axis=0)
    norms = np.linalg.norm(csum.reshape(len(trace), -1), axis=1)
    k = trace.k
    return BurninDiagnostic([(t, float(norms[t - 1] / (t * math.sqrt(k)))) for t in cps])
