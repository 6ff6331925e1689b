"""Exact single-site heat-bath chain for pinned measures under hard-wall
and clamping constraints, plus chain diagnostics.

Sites are visited in lexicographic order; every update is an exact draw
from the full conditional, so the chain is stationary for the target from
the first sweep and the schedule only affects mixing, not correctness.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .gaussfield import FieldSample
from .pinning import contact_counts


@dataclass(frozen=True)
class ChainConfig:
    sweeps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError(
                f"need sweeps > burn_in >= 0, got {self.sweeps}, {self.burn_in}"
            )
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")


def default_burn_in(spec):
    """Conservative desk-scale default: 10 sweeps per squared side length."""
    return 10 * (2 * spec.N + 1) ** 2


def default_chain_config(spec, seed=0, measured_sweeps=3000, thin=1):
    burn = default_burn_in(spec)
    return ChainConfig(
        sweeps=burn + measured_sweeps * thin, burn_in=burn, thin=thin, seed=seed
    )


@dataclass
class Constraint:
    """Hard constraints of a chain: optional floor (heights >= floor
    everywhere) and optional clamped sites held at fixed values."""

    region: object
    floor: float = None
    clamps: dict = field(default_factory=dict)

    def __post_init__(self):
        self.clamps = {tuple(s): float(v) for s, v in (self.clamps or {}).items()}
        for s, v in self.clamps.items():
            if s not in self.region:
                raise ValueError(f"clamped site {s} not in region")
            if self.floor is not None and v < self.floor:
                raise ValueError(
                    f"clamp {s}={v} violates the floor {self.floor}"
                )

    def satisfied_by(self, values):
        values = np.asarray(values)
        if self.floor is not None and not (values >= self.floor).all():
            return False
        idx = self.region.index
        return all(values[idx[s]] == v for s, v in self.clamps.items())


class InfeasibleConstraintError(Exception):
    pass


def _effective_floor(measure, constraint):
    floors = [f for f in (measure.floor, constraint.floor) if f is not None]
    return max(floors) if floors else -np.inf


def initial_state(measure, constraint):
    """Feasible starting field: constant at max(floor, 0) + a/2, clamps
    applied on top."""
    region = constraint.region
    floor = _effective_floor(measure, constraint)
    base = max(floor, 0.0) + measure.a / 2.0 if np.isfinite(floor) else measure.a / 2.0
    values = np.full(len(region), base)
    for s, v in constraint.clamps.items():
        values[region.index[s]] = v
    if not constraint.satisfied_by(values):
        raise InfeasibleConstraintError("no feasible initial state")
    return FieldSample(region, values)


def _kernel_args(measure, constraint):
    region = constraint.region
    indptr, indices = region.neighbor_csr()
    clamped = np.zeros(len(region), dtype=np.bool_)
    for s in constraint.clamps:
        clamped[region.index[s]] = True
    w_lo, w_hi = measure.window_bounds()
    floor = _effective_floor(measure, constraint)
    inv2d = 1.0 / (2 * region.spec.d)
    return indptr, indices, inv2d, clamped, measure.b, w_lo, w_hi, floor


def heat_bath_sweep(state, measure, constraint, rng):
    """One full lexicographic sweep; returns a new FieldSample."""
    if not constraint.satisfied_by(state.values):
        raise ValueError("state violates the constraint")
    values = state.values.copy()
    args = _kernel_args(measure, constraint)
    _kernels.sweep(values, *args, rng)
    return FieldSample(constraint.region, values)


@dataclass
class ChainResult:
    """Thinned post-burn-in stream plus summary series and diagnostics."""

    region: object
    values: np.ndarray          # (n_kept, n_sites); empty if not kept
    xi_tilde: np.ndarray        # one-sided contact count per kept sweep
    field_mean: np.ndarray      # field average per kept sweep
    field_min: np.ndarray       # field minimum per kept sweep
    diagnostics: dict
    config: ChainConfig

    def fields(self):
        return [FieldSample(self.region, row) for row in self.values]


def run_chain(measure, constraint, config, keep_fields=True, auto_thin=False):
    """Run the heat-bath chain and return the sample stream + diagnostics.

    With auto_thin the recorded stream is re-thinned after the run so the
    lag-1 autocorrelation of the contact count drops below 0.1.
    """
    region = constraint.region
    state = initial_state(measure, constraint)
    values = state.values.copy()
    args = _kernel_args(measure, constraint)
    rng = np.random.default_rng(config.seed)

    if config.burn_in:
        _kernels.run_sweeps(values, *args, config.burn_in, rng)

    n_kept = (config.sweeps - config.burn_in) // config.thin
    kept = np.empty((n_kept, len(region))) if keep_fields else np.empty((0, 0))
    xi = np.empty(n_kept)
    f_mean = np.empty(n_kept)
    f_min = np.empty(n_kept)
    k = 0
    for _ in range(n_kept):
        _kernels.run_sweeps(values, *args, config.thin, rng)
        if keep_fields:
            kept[k] = values
        xi[k] = contact_counts(values, measure.a, "one_sided")
        f_mean[k] = values.mean()
        f_min[k] = values.min()
        k += 1

    if auto_thin:
        extra = suggest_thin(xi)
        if extra > 1:
            sl = slice(None, None, extra)
            kept, xi, f_mean, f_min = kept[sl], xi[sl], f_mean[sl], f_min[sl]

    diag = {
        "tau_int_xi": integrated_autocorr_time(xi),
        "tau_int_mean": integrated_autocorr_time(f_mean),
        "ess": len(xi) / integrated_autocorr_time(xi),
        "stderr_xi": batch_means_stderr(xi),
        "stderr_mean": batch_means_stderr(f_mean),
        "thin": config.thin * (suggest_thin(xi) if auto_thin else 1),
    }
    return ChainResult(
        region=region, values=kept, xi_tilde=xi, field_mean=f_mean,
        field_min=f_min, diagnostics=diag, config=config,
    )


# --- diagnostics ------------------------------------------------------------


def _autocorr(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    var = np.dot(x, x)
    if var == 0.0 or n < 2:
        return np.array([1.0])
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n].real
    return acf / var


def integrated_autocorr_time(x, window_factor=6.0):
    """Initial-window estimate: tau = 1 + 2 sum rho_l, stopping at the
    smallest window W with W >= window_factor * tau(W)."""
    rho = _autocorr(x)
    tau = 1.0
    for lag in range(1, rho.size):
        tau += 2.0 * rho[lag]
        if lag >= window_factor * tau:
            break
    return max(tau, 1.0)


def effective_sample_size(x):
    return len(x) / integrated_autocorr_time(x)


def suggest_thin(x, target=0.1, max_thin=None):
    """Smallest stride at which the autocorrelation falls below target."""
    rho = _autocorr(x)
    limit = max_thin or max(1, len(rho) // 4)
    for lag in range(1, min(len(rho), limit + 1)):
        if abs(rho[lag]) < target:
            return lag
    return limit


def batch_means_stderr(x, min_batches=10):
    """Batch-means standard error of the mean of a correlated series,
    with the batch length kept above ~5 autocorrelation times."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 * min_batches:
        return float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    tau = integrated_autocorr_time(x)
    size = max(int(math.sqrt(n)), int(math.ceil(5.0 * tau)))
    n_batches = n // size
    if n_batches < min_batches:
        n_batches = min_batches
        size = n // n_batches
    trimmed = x[: n_batches * size].reshape(n_batches, size)
    means = trimmed.mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))
