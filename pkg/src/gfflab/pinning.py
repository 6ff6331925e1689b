"""Square-well pinning measures, contact statistics, and a brute-force
oracle for tiny instances.

A pinned measure reweights the free field by exp(b * #contacts), where a
contact is a site whose height falls in the reward window ([0,a] for the
one-sided measure, [-a,a] for the symmetric one), optionally restricted to
the hard-wall event {phi >= floor everywhere}.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import gaussfield as gf
from .lattice import build_box

EXACT_TINY_CAP = 6
_MC_SAMPLES = 10**7
_GL_ORDER = 16
_PANEL_WIDTH = 2.0
_TAIL_SIGMAS = 9.0


class CapExceededError(Exception):
    """Instance too large for the brute-force oracle."""


@dataclass(frozen=True)
class PinnedMeasureSpec:
    """Parameters of one pinned Gibbs measure on a box.

    window "one_sided" rewards heights in [0, a]; "symmetric" rewards
    |height| <= a. floor, when set, conditions the measure on the field
    staying at or above that level everywhere.
    """

    spec: object
    a: float
    b: float
    window: str = "one_sided"
    floor: float = None

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError(f"window size a must be > 0, got {self.a}")
        if self.b < 0:
            raise ValueError(f"reward b must be >= 0, got {self.b}")
        if self.window not in ("one_sided", "symmetric"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.floor is not None and self.floor < 0:
            raise ValueError(f"floor must be >= 0, got {self.floor}")

    def window_bounds(self):
        if self.window == "one_sided":
            return 0.0, self.a
        return -self.a, self.a

    def with_floor(self, t):
        return dataclasses.replace(self, floor=t)

    def symmetric_counterpart(self):
        return dataclasses.replace(self, window="symmetric")

    def to_json(self):
        return {
            "a": self.a,
            "b": self.b,
            "window": self.window,
            "floor": self.floor,
        }


@dataclass
class ContactStats:
    """Contact counts of one field: one-sided count, symmetric count, and
    the one-sided contact set itself."""

    xi_tilde: int
    xi_hat: int
    contact_set: tuple


def window_mask(values, a, window="one_sided"):
    """Elementwise indicator of the reward window (closed intervals)."""
    values = np.asarray(values)
    if window == "one_sided":
        return (values >= 0.0) & (values <= a)
    return np.abs(values) <= a


def contact_counts(values, a, window="one_sided"):
    """Per-row contact counts for a (m, n) array of field values."""
    return window_mask(values, a, window).sum(axis=-1)


def contact_stats(field, a):
    vals = field.values
    tilde = window_mask(vals, a, "one_sided")
    hat = window_mask(vals, a, "symmetric")
    sites = tuple(s for s, hit in zip(field.region.sites, tilde) if hit)
    return ContactStats(
        xi_tilde=int(tilde.sum()), xi_hat=int(hat.sum()), contact_set=sites
    )


def reward(field, measure):
    """Total pinning reward b * #contacts of a field under a measure."""
    return measure.b * float(
        contact_counts(field.values, measure.a, measure.window)
    )


def expansion_weights(b, subset_size):
    """Weight (e^b - 1)^k of a k-site subset in the product expansion
    exp(b * #contacts) = sum over subsets A of (e^b - 1)^|A| 1{A subset of
    the contact set}."""
    if b < 0:
        raise ValueError(f"reward b must be >= 0, got {b}")
    if subset_size == 0:
        return 1.0
    return math.expm1(b) ** subset_size


# --- vectorized events (predicates over (m, n) value arrays) ---------------


def event_all_at_least(level=0.0):
    def ev(values):
        return (np.asarray(values) >= level).all(axis=-1)

    return ev


def event_xi_below(k, a, window="one_sided"):
    def ev(values):
        return contact_counts(values, a, window) < k

    return ev


def event_xi_above(k, a, window="one_sided"):
    def ev(values):
        return contact_counts(values, a, window) > k

    return ev


def event_sites_in_window(indices, a, window="one_sided"):
    indices = list(indices)

    def ev(values):
        values = np.asarray(values)
        if not indices:
            return np.ones(values.shape[0], dtype=bool)
        return window_mask(values[:, indices], a, window).all(axis=-1)

    return ev


def event_true():
    def ev(values):
        return np.ones(np.asarray(values).shape[0], dtype=bool)

    return ev


@dataclass
class ExactResult:
    """Output of the brute-force oracle: value with an error estimate."""

    value: float
    error: float
    method: str
    n_evals: int

    def __iter__(self):
        return iter((self.value, self.error))


def exact_tiny(
    measure,
    event,
    region=None,
    method="auto",
    mc_samples=_MC_SAMPLES,
    seed=0,
    extra_breakpoints=(),
    cap=EXACT_TINY_CAP,
):
    """Probability of an event under a pinned measure, by brute force.

    Quadrature (panelized Gauss-Legendre, near machine accuracy) for up to
    3 sites; reweighted Monte Carlo on shared free-field samples for up to
    the cap. The event must be a vectorized predicate over (m, n) value
    arrays; axis-aligned event thresholds that are not window or floor
    boundaries should be passed via extra_breakpoints so the quadrature can
    split panels there.
    """
    if region is None:
        region = build_box(measure.spec)
    n = len(region)
    if n > cap:
        raise CapExceededError(f"{n} sites exceeds the oracle cap {cap}")
    if method == "auto":
        method = "quadrature" if n <= 3 else "mc"
    if method == "quadrature":
        if n > 3:
            raise CapExceededError("quadrature path supports at most 3 sites")
        return _exact_tiny_quadrature(measure, event, region, extra_breakpoints)
    if method == "mc":
        return _exact_tiny_mc(measure, event, region, mc_samples, seed)
    raise ValueError(f"unknown method {method!r}")


def _axis_nodes(lo, hi, breakpoints):
    """Gauss-Legendre nodes/weights over [lo, hi], panel-split at the
    breakpoints and at most _PANEL_WIDTH wide."""
    cuts = [lo] + [b for b in sorted(set(breakpoints)) if lo < b < hi] + [hi]
    gl_x, gl_w = np.polynomial.legendre.leggauss(_GL_ORDER)
    xs, ws = [], []
    for left, right in zip(cuts[:-1], cuts[1:]):
        n_panels = max(1, int(np.ceil((right - left) / _PANEL_WIDTH)))
        for p in range(n_panels):
            p_lo = left + (right - left) * p / n_panels
            p_hi = left + (right - left) * (p + 1) / n_panels
            half = 0.5 * (p_hi - p_lo)
            xs.append(0.5 * (p_lo + p_hi) + half * gl_x)
            ws.append(half * gl_w)
    return np.concatenate(xs), np.concatenate(ws)


def _exact_tiny_quadrature(measure, event, region, extra_breakpoints):
    n = len(region)
    Q = gf.precision_of(region).matrix.toarray()
    sigma_max = math.sqrt(gf.covariance_matrix(region).diagonal().max())
    w_lo, w_hi = measure.window_bounds()
    span = max(abs(w_lo), abs(w_hi), abs(measure.floor or 0.0))
    L = span + _TAIL_SIGMAS * sigma_max
    lo = measure.floor if measure.floor is not None else -L
    breaks = {w_lo, w_hi, 0.0}
    breaks.update(extra_breakpoints)

    axes = [_axis_nodes(lo, L, breaks) for _ in range(n)]
    num = 0.0
    den = 0.0
    n_evals = 0
    x0, w0 = axes[0]
    slab = max(1, 2_000_000 // max(1, int(np.prod([a[0].size for a in axes[1:]])) * n))
    rest = [a[0] for a in axes[1:]]
    rest_w = [a[1] for a in axes[1:]]
    if rest:
        tail_pts = np.stack(
            [g.ravel() for g in np.meshgrid(*rest, indexing="ij")], axis=-1
        )
        tail_w = np.prod(
            np.stack(
                [g.ravel() for g in np.meshgrid(*rest_w, indexing="ij")], axis=-1
            ),
            axis=-1,
        )
    else:
        tail_pts = np.zeros((1, 0))
        tail_w = np.ones(1)

    for s_lo in range(0, x0.size, slab):
        s_hi = min(s_lo + slab, x0.size)
        xs = x0[s_lo:s_hi]
        m = xs.size * tail_pts.shape[0]
        pts = np.empty((m, n))
        pts[:, 0] = np.repeat(xs, tail_pts.shape[0])
        if n > 1:
            pts[:, 1:] = np.tile(tail_pts, (xs.size, 1))
        wq = np.repeat(w0[s_lo:s_hi], tail_w.size) * np.tile(tail_w, xs.size)
        dens = np.exp(-0.5 * np.einsum("ij,jk,ik->i", pts, Q, pts))
        tilt = np.exp(
            measure.b * contact_counts(pts, measure.a, measure.window)
        )
        base = wq * dens * tilt
        ev = np.asarray(event(pts), dtype=bool)
        num += float(base[ev].sum())
        den += float(base.sum())
        n_evals += m
    value = num / den
    return ExactResult(
        value=value, error=1e-12 * max(1.0, abs(value)), method="quadrature",
        n_evals=n_evals,
    )


def _exact_tiny_mc(measure, event, region, mc_samples, seed):
    op = gf.precision_of(region)
    rng = np.random.default_rng(seed)
    n_batches = 100
    batch = int(np.ceil(mc_samples / n_batches))
    nums = np.zeros(n_batches)
    dens = np.zeros(n_batches)
    for i in range(n_batches):
        vals = gf._noise_then_solve(op, batch, rng)
        w = np.exp(measure.b * contact_counts(vals, measure.a, measure.window))
        if measure.floor is not None:
            w = w * (vals >= measure.floor).all(axis=1)
        ev = np.asarray(event(vals), dtype=bool)
        nums[i] = float((w * ev).sum())
        dens[i] = float(w.sum())
    total_n = nums.sum()
    total_d = dens.sum()
    if total_d == 0.0:
        raise ZeroDivisionError("all Monte Carlo weight vanished")
    value = total_n / total_d
    # jackknife over batches for the stderr of the ratio
    loo = (total_n - nums) / (total_d - dens)
    err = math.sqrt((n_batches - 1) / n_batches * ((loo - loo.mean()) ** 2).sum())
    return ExactResult(
        value=value, error=err, method="mc", n_evals=batch * n_batches
    )
