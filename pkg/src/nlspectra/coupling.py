"""Time-periodic coupling matrix fields and hypothesis validators.

A coupling field is a K x K matrix of declarative expressions A(t, x)
(see `expressions`).  Two structural hypotheses are checked on a finite
sample tensor (grid nodes x uniform time samples):

  cooperativity    all off-diagonal entries nonnegative (order-preserving
                   dynamics),
  irreducibility   every nonempty partition (S, S') of the component set
                   is crossed by a nonzero off-diagonal entry at every
                   sample; equivalent to strong connectivity of the
                   off-diagonal support digraph.

Both checks are sample-based; coefficients come from smooth expressions,
so dense sampling is reliable.  Reports record what was sampled.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import expressions as ex

DEFAULT_TOL = 1e-12
EXHAUSTIVE_MAX_K = 12
CROSSCHECK_MAX_K = 8


class CouplingError(ValueError):
    pass


@dataclass(frozen=True)
class CouplingField:
    """K x K matrix field A(t, x), T-periodic in t by construction.

    entries: K x K nested list of expression source strings.
    periods: spatial cell periods; when set, coordinates are reduced into
        the cell before evaluation, so the field is exactly periodic in x.
    box: optional domain box used to reject out-of-domain sample points.
    """

    k: int
    period: float
    dim: int
    entries: tuple
    periods: tuple = None
    box: tuple = None
    _asts: tuple = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.k < 1:
            raise CouplingError(f"system size K must be >= 1, got {self.k}")
        if not self.period > 0.0:
            raise CouplingError(f"period must be positive, got {self.period}")
        if len(self.entries) != self.k or any(len(r) != self.k for r in self.entries):
            raise CouplingError(f"entries must form a {self.k}x{self.k} matrix")
        entries = tuple(tuple(str(s) for s in row) for row in self.entries)
        object.__setattr__(self, "entries", entries)
        asts = []
        for row in entries:
            ast_row = []
            for src in row:
                node = ex.parse_expression(src)
                ex.validate_expression(node, self.dim, self.periods is not None)
                ast_row.append(node)
            asts.append(tuple(ast_row))
        object.__setattr__(self, "_asts", tuple(asts))
        if self.periods is not None:
            object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))

    def _reduce_x(self, x):
        if self.periods is None:
            return x
        p = np.array(self.periods)
        xr = np.fmod(x, p)
        return np.where(xr < 0.0, xr + p, xr)

    def _check_in_box(self, x):
        if self.box is None or self.periods is not None:
            return
        x2 = np.atleast_2d(x)
        for axis, (lo, hi) in enumerate(self.box):
            bad = (x2[:, axis] < lo) | (x2[:, axis] > hi)
            if np.any(bad):
                raise CouplingError(
                    f"sample point outside domain on axis {axis + 1}: "
                    f"{x2[np.argmax(bad)]}"
                )

    def sample(self, t, x):
        """Evaluate A(t, x) at a single point; returns a (K, K) array."""
        x = np.asarray(x, dtype=float).reshape(self.dim)
        self._check_in_box(x)
        return self.sample_batch(t, x[None, :])[0]

    def sample_batch(self, t, points):
        """Evaluate A(t, x_m) for points of shape (M, dim) -> (M, K, K)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise CouplingError(
                f"points must have shape (M, {self.dim}), got {points.shape}"
            )
        self._check_in_box(points)
        xr = self._reduce_x(points)
        tau = ex.reduce_phase(float(t), self.period)
        out = np.empty((points.shape[0], self.k, self.k))
        for i in range(self.k):
            for j in range(self.k):
                out[:, i, j] = ex.evaluate(self._asts[i][j], tau, xr, self.periods)
        return out

    def shifted(self, c):
        """The field A + c*I (adds the constant c to every diagonal entry)."""
        entries = [
            [
                f"({src}) + ({c!r})" if i == j else src
                for j, src in enumerate(row)
            ]
            for i, row in enumerate(self.entries)
        ]
        return CouplingField(
            k=self.k, period=self.period, dim=self.dim, entries=entries,
            periods=self.periods, box=self.box,
        )

    @property
    def signature(self):
        flat = ";".join(src for row in self.entries for src in row)
        return (
            f"coupling(K={self.k};T={self.period!r};dim={self.dim};"
            f"periods={self.periods!r};entries=[{flat}])"
        )


def sample_coupling(field, t, x):
    """Deterministic evaluation of the coupling matrix at (t, x)."""
    return field.sample(t, x)


@dataclass
class HypothesisReport:
    """Outcome of the structural checks over the sample tensor.

    Only the fields for the check that produced the report are populated;
    `merge` combines a cooperativity and an irreducibility report.
    """

    samples_checked: int = 0
    cooperative: bool = None
    min_offdiagonal: float = None
    cooperative_witness: tuple = None  # (t, x, k, j, value) of the worst sample
    irreducible: bool = None
    irreducible_witness: dict = None
    method: str = None
    notes: tuple = ()

    @property
    def passed(self):
        checks = [v for v in (self.cooperative, self.irreducible) if v is not None]
        return bool(checks) and all(checks)

    def merge(self, other):
        merged = HypothesisReport(
            samples_checked=max(self.samples_checked, other.samples_checked)
        )
        for src in (self, other):
            for name in (
                "cooperative", "min_offdiagonal", "cooperative_witness",
                "irreducible", "irreducible_witness", "method",
            ):
                val = getattr(src, name)
                if val is not None:
                    setattr(merged, name, val)
            merged.notes = merged.notes + src.notes
        return merged


def _time_samples(period, count):
    return [q * period / count for q in range(count)]


def validate_cooperative(field, grid, time_samples=16, tol=DEFAULT_TOL):
    """Check off-diagonal nonnegativity over {t_q} x {grid nodes}.

    Records the minimum off-diagonal value found and its sample location.
    """
    if time_samples < 1:
        raise CouplingError("time_samples must be >= 1")
    k = field.k
    times = _time_samples(field.period, time_samples)
    count = len(times) * grid.size
    if k == 1:
        return HypothesisReport(
            samples_checked=count, cooperative=True, min_offdiagonal=math.inf,
            notes=("no off-diagonal entries for K=1",),
        )
    worst_val = math.inf
    worst = None
    rng = np.arange(k)
    for t in times:
        off = field.sample_batch(t, grid.nodes)
        off[:, rng, rng] = math.inf
        m_idx, ki, kj = np.unravel_index(np.argmin(off), off.shape)
        val = off[m_idx, ki, kj]
        if val < worst_val:
            worst_val = float(val)
            worst = (t, tuple(grid.nodes[m_idx]), int(ki) + 1, int(kj) + 1, float(val))
    return HypothesisReport(
        samples_checked=count,
        cooperative=bool(worst_val >= -tol),
        min_offdiagonal=worst_val,
        cooperative_witness=worst,
    )


def _subset_crossed(pattern_rows, k):
    """Exhaustive partition check on a boolean support pattern.

    pattern_rows: per-component bitmask of j with |a_kj| above tolerance.
    Returns (ok, failing_subset or None): ok iff every nonempty proper
    subset S has an edge from S into its complement.
    """
    full = (1 << k) - 1
    for s in range(1, full):
        reach = 0
        ss = s
        while ss:
            low = ss & -ss
            reach |= pattern_rows[low.bit_length() - 1]
            ss ^= low
        if not (reach & ~s & full):
            return False, s
    return True, None


def _strongly_connected(pattern):
    graph = csr_matrix(pattern.astype(np.int8))
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    return n_comp == 1


def _subset_labels(mask, k):
    return tuple(i + 1 for i in range(k) if mask >> i & 1)


def validate_irreducible(field, grid, time_samples=16, tol=DEFAULT_TOL):
    """Check strong irreducibility over {t_q} x {grid nodes}.

    At every sample, each nonempty partition (S, S') of the component set
    must be crossed by an off-diagonal entry with |a_kj| > tol.  Exhaustive
    partition enumeration is the ground truth for K <= 12, and is
    cross-checked against strong connectivity of the support digraph for
    K <= 8 (the two are equivalent).  For K > 12 only the connectivity
    test runs and the report is flagged accordingly.
    """
    if time_samples < 1:
        raise CouplingError("time_samples must be >= 1")
    k = field.k
    times = _time_samples(field.period, time_samples)
    count = len(times) * grid.size
    if k == 1:
        return HypothesisReport(
            samples_checked=count, irreducible=True, method="vacuous",
            notes=("irreducibility is vacuous for K=1",),
        )

    exhaustive = k <= EXHAUSTIVE_MAX_K
    method = "exhaustive+connectivity" if k <= CROSSCHECK_MAX_K else (
        "exhaustive" if exhaustive else "connectivity_only"
    )
    rng = np.arange(k)
    seen_patterns = {}
    failure = None
    min_entry = np.full((k, k), math.inf)
    weakest_crossing = None

    for t in times:
        a = np.abs(field.sample_batch(t, grid.nodes))
        a[:, rng, rng] = 0.0
        np.minimum(min_entry, a.min(axis=0), out=min_entry)
        patterns = a > tol
        # Distinct patterns are few for smooth fields; dedupe before the
        # exponential enumeration.
        for m_idx in range(patterns.shape[0]):
            key = patterns[m_idx].tobytes()
            if key in seen_patterns:
                continue
            pat = patterns[m_idx]
            if exhaustive:
                rows = [_rowmask(pat[i]) for i in range(k)]
                ok, failing = _subset_crossed(rows, k)
                if k <= CROSSCHECK_MAX_K and ok != _strongly_connected(pat):
                    raise AssertionError(
                        "partition enumeration and strong connectivity disagree"
                    )
            else:
                ok, failing = _strongly_connected(pat), None
            seen_patterns[key] = (ok, failing)
            if not ok and failure is None:
                failure = {
                    "t": t,
                    "x": tuple(grid.nodes[m_idx]),
                    "subset": _subset_labels(failing, k) if failing else None,
                }

    ok_all = all(ok for ok, _ in seen_patterns.values())
    if ok_all:
        _, weakest_subset, weakest_value = _weakest_partition(min_entry, k)
        weakest_crossing = {
            "subset": _subset_labels(weakest_subset, k),
            "min_max_crossing": weakest_value,
            "note": "entrywise minimum over samples; conservative bound",
        }
        if weakest_value <= tol:
            weakest_crossing["note"] += "; crossing entry at or below tolerance"
    witness = failure if failure is not None else weakest_crossing
    return HypothesisReport(
        samples_checked=count,
        irreducible=bool(ok_all),
        irreducible_witness=witness,
        method=method,
    )


def _rowmask(row):
    mask = 0
    for j, v in enumerate(row):
        if v:
            mask |= 1 << j
    return mask


def _weakest_partition(magnitudes, k):
    """Subset S minimizing the largest crossing |a_kj|, k in S, j outside."""
    full = (1 << k) - 1
    best_val = math.inf
    best_s = None
    for s in range(1, full):
        cross_max = 0.0
        for i in range(k):
            if not (s >> i & 1):
                continue
            for j in range(k):
                if (s >> j & 1) or i == j:
                    continue
                if magnitudes[i, j] > cross_max:
                    cross_max = magnitudes[i, j]
        if cross_max < best_val:
            best_val = cross_max
            best_s = s
    return True, best_s, float(best_val)


def validate_hypotheses(field, grid, time_samples=16, tol=DEFAULT_TOL):
    """Run both validators and merge the reports."""
    coop = validate_cooperative(field, grid, time_samples, tol)
    irr = validate_irreducible(field, grid, time_samples, tol)
    return coop.merge(irr)
