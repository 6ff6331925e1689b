"""Finite boxes in Z^d, outer boundaries, edges, and sparse anchor sets.

Sites are plain tuples of ints. A Region is an ordered (lexicographic) set
of sites inside a centered box {-N,..,N}^d; every field lives on a Region
with implicit zero values outside it.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

# Hard cap on |A|; beyond this the direct solvers and samplers stop being
# "desk scale" and the constructors refuse to proceed.
MAX_SITES = 200_000

Site = tuple


class DeskScaleError(Exception):
    """Requested lattice object exceeds the configured site budget."""


@dataclass(frozen=True)
class LatticeSpec:
    """Centered box {-N,..,N}^d, so the box has (2N+1)^d sites."""

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.N < 1:
            raise ValueError(f"box radius must be >= 1, got {self.N}")

    @property
    def side(self):
        return 2 * self.N + 1

    @property
    def n_sites(self):
        return self.side**self.d

    def contains(self, site):
        return len(site) == self.d and all(abs(c) <= self.N for c in site)


def neighbors(site):
    """The 2d nearest neighbors of a site, in a fixed deterministic order."""
    out = []
    for axis in range(len(site)):
        for step in (-1, 1):
            nb = list(site)
            nb[axis] += step
            out.append(tuple(nb))
    return out


class Region:
    """An ordered set of sites of a box, with cached adjacency structure.

    Immutable after construction; iteration order is lexicographic, and all
    vectors/matrices indexed by the region follow that order.
    """

    def __init__(self, spec, sites):
        sites = sorted(set(tuple(s) for s in sites))
        if not sites:
            raise ValueError("a Region must contain at least one site")
        for s in sites:
            if not spec.contains(s):
                raise ValueError(f"site {s} outside box N={spec.N}, d={spec.d}")
        if len(sites) > MAX_SITES:
            raise DeskScaleError(
                f"{len(sites)} sites exceeds the desk-scale cap {MAX_SITES}"
            )
        self.spec = spec
        self.sites = tuple(sites)
        self.index = {s: i for i, s in enumerate(self.sites)}
        self._neighbor_lists = None

    def __len__(self):
        return len(self.sites)

    def __contains__(self, site):
        return tuple(site) in self.index

    def __iter__(self):
        return iter(self.sites)

    def __eq__(self, other):
        return (
            isinstance(other, Region)
            and self.spec == other.spec
            and self.sites == other.sites
        )

    def __hash__(self):
        return hash((self.spec, self.sites))

    def __repr__(self):
        return f"Region(d={self.spec.d}, N={self.spec.N}, n={len(self)})"

    @property
    def neighbor_lists(self):
        """For each site (by index), indices of its neighbors inside the region."""
        if self._neighbor_lists is None:
            lists = []
            for s in self.sites:
                lists.append(
                    tuple(self.index[nb] for nb in neighbors(s) if nb in self.index)
                )
            self._neighbor_lists = tuple(lists)
        return self._neighbor_lists

    def neighbor_csr(self):
        """Flat CSR-style (indptr, indices) arrays of in-region adjacency."""
        lists = self.neighbor_lists
        indptr = np.zeros(len(self) + 1, dtype=np.int64)
        for i, l in enumerate(lists):
            indptr[i + 1] = indptr[i] + len(l)
        indices = np.fromiter(
            (j for l in lists for j in l), dtype=np.int64, count=indptr[-1]
        )
        return indptr, indices

    def values_of(self, mapping, default=0.0):
        """Dense vector (lexicographic order) from a site->value mapping."""
        out = np.full(len(self), default, dtype=float)
        for s, v in mapping.items():
            out[self.index[tuple(s)]] = v
        return out

    def to_json(self):
        return {
            "d": self.spec.d,
            "N": self.spec.N,
            "sites": [list(s) for s in self.sites],
        }

    @classmethod
    def from_json(cls, doc):
        spec = LatticeSpec(d=doc["d"], N=doc["N"])
        return cls(spec, [tuple(s) for s in doc["sites"]])


def build_box(spec, max_sites=MAX_SITES):
    """The full box {-N,..,N}^d as a Region (lexicographic order)."""
    if spec.n_sites > max_sites:
        raise DeskScaleError(
            f"box has {spec.n_sites} sites, above the cap {max_sites}"
        )
    rng = range(-spec.N, spec.N + 1)
    return Region(spec, itertools.product(rng, repeat=spec.d))


def outer_boundary(region):
    """All sites at graph distance exactly 1 from the region.

    Boundary sites may lie outside the ambient box; the zero boundary
    condition applies there just the same.
    """
    out = set()
    for s in region.sites:
        for nb in neighbors(s):
            if nb not in region:
                out.add(nb)
    return out


def edges(region):
    """Nearest-neighbor pairs with at least one endpoint in the region.

    Each unordered pair appears once; pairs joining two boundary sites are
    dropped (they carry zero energy under the zero boundary condition).
    """
    seen = set()
    out = []
    for s in region.sites:
        for nb in neighbors(s):
            pair = (s, nb) if s <= nb else (nb, s)
            if pair not in seen:
                seen.add(pair)
                out.append(pair)
    return out


@dataclass(frozen=True)
class SparseAnchor:
    """One anchor site near each node of the delta-spaced sublattice.

    For delta <= 10 the admissible ball |z - y| < delta/10 contains only y
    itself, so the anchor set is deterministic; for larger delta each anchor
    is drawn uniformly from the admissible integer ball, using jitter_seed.
    """

    spec: LatticeSpec
    delta: int
    anchors: tuple = field(default_factory=tuple)
    jitter_seed: int = 0

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")

    def cells(self):
        """The nodes y of the delta-sublattice inside the box."""
        return _sublattice_nodes(self.spec, self.delta)

    def is_valid(self):
        """Re-check the defining predicate: exactly one anchor per cell,
        all anchors in the box, pairwise distinct, no stray anchors."""
        spec, delta = self.spec, self.delta
        anchors = list(self.anchors)
        if len(set(anchors)) != len(anchors):
            return False
        if any(not spec.contains(z) for z in anchors):
            return False
        cells = self.cells()
        radius2 = (delta / 10.0) ** 2
        matched = 0
        for y in cells:
            close = [
                z
                for z in anchors
                if sum((zi - yi) ** 2 for zi, yi in zip(z, y)) < radius2
            ]
            if len(close) != 1:
                return False
            matched += 1
        return matched == len(anchors)

    def to_json(self):
        return {
            "d": self.spec.d,
            "N": self.spec.N,
            "delta": self.delta,
            "anchors": [list(z) for z in self.anchors],
        }

    @classmethod
    def from_json(cls, doc):
        spec = LatticeSpec(d=doc["d"], N=doc["N"])
        return cls(
            spec=spec,
            delta=doc["delta"],
            anchors=tuple(tuple(z) for z in doc["anchors"]),
        )


def _sublattice_nodes(spec, delta):
    ks = range(-(spec.N // delta), spec.N // delta + 1)
    return [tuple(delta * k for k in coords)
            for coords in itertools.product(ks, repeat=spec.d)]


def _admissible_ball(spec, y, delta):
    """Integer sites of the box strictly within delta/10 of y."""
    radius = delta / 10.0
    reach = int(np.ceil(radius)) - 1 if radius == int(radius) else int(radius)
    radius2 = radius**2
    ball = []
    for offs in itertools.product(range(-reach, reach + 1), repeat=spec.d):
        if sum(o * o for o in offs) < radius2:
            z = tuple(yi + oi for yi, oi in zip(y, offs))
            if spec.contains(z):
                ball.append(z)
    return sorted(ball)


def generate_delta_sparse(spec, delta, jitter_seed=0):
    """Draw a SparseAnchor: one anchor per sublattice node.

    Anchors are chosen uniformly over each node's admissible ball; the balls
    are disjoint (radius < delta/2) so validity is automatic.
    """
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    rng = np.random.default_rng(jitter_seed)
    anchors = []
    for y in _sublattice_nodes(spec, delta):
        if delta <= 10:
            anchors.append(y)
        else:
            ball = _admissible_ball(spec, y, delta)
            anchors.append(ball[rng.integers(len(ball))])
    return SparseAnchor(
        spec=spec, delta=delta, anchors=tuple(anchors), jitter_seed=jitter_seed
    )


def sparse_complement(anchor):
    """The box minus the anchor sites (the unpinned bulk)."""
    box = build_box(anchor.spec)
    dropped = set(anchor.anchors)
    return Region(anchor.spec, [s for s in box.sites if s not in dropped])


def region_to_file(region, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(region.to_json(), fh, sort_keys=True)


def region_from_file(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "anchors" in doc and "sites" not in doc:
        return sparse_complement(SparseAnchor.from_json(doc))
    return Region.from_json(doc)
