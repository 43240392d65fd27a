"""Kernels, box domains, tensor grids, and discrete nonlocal operators.

The dispersal operator u -> integral of kappa(y - x) u(y) dy is discretized
by the Nystrom method on a tensor midpoint grid: matrix entries are
kappa(x_n - x_m) * w_n.  Three boundary types are supported:

  dirichlet   hostile surroundings: full unit loss, diagonal -1
  neumann     no-flux: diagonal cancels the within-domain kernel mass, so
              constants are exact equilibria
  periodic    one periodicity cell with minimal-image wrapping; wrapped
              kernel rows are normalized to unit mass

Domains are axis-aligned boxes so the quadrature stays a tensor midpoint
rule with uniform positive weights (positivity of the discrete operator is
what the order-preservation checks downstream rely on).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
PERIODIC = "periodic"
_BOUNDARY_TYPES = (DIRICHLET, NEUMANN, PERIODIC)


class DiscretizationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# kernel profiles
# ---------------------------------------------------------------------------

def _bump_constant(dim, power):
    # Normalizes c * (1 - |z|^2)^q over the unit ball to unit mass:
    # integral = pi^(N/2) * Gamma(q+1) / Gamma(N/2 + q + 1).
    return math.gamma(dim / 2.0 + power + 1.0) / (
        math.gamma(power + 1.0) * math.pi ** (dim / 2.0)
    )


def _bump_profile(dim, power=3):
    power = int(power)
    if power < 1:
        raise DiscretizationError("bump profile needs power >= 1")
    c = _bump_constant(dim, power)

    def profile(r2):
        # r2 = |z|^2 for the unscaled profile; zero outside the unit ball.
        vals = np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** power, 0.0)
        return c * vals

    return profile, {"power": power}


_PROFILES = {"bump": _bump_profile}


@dataclass(frozen=True)
class Kernel:
    """Rescaled dispersal kernel kappa(z) = delta^-N * base((z/delta))."""

    profile: str
    params: dict
    delta: float
    dim: int
    support_radius: float
    _base: object = field(repr=False, compare=False)

    def __call__(self, z):
        """Evaluate kappa at displacements z of shape (..., dim)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DiscretizationError(
                f"displacement dimension {z.shape[-1]} != kernel dim {self.dim}"
            )
        scaled = z / self.delta
        r2 = np.sum(scaled * scaled, axis=-1)
        return self._base(r2) / self.delta ** self.dim

    def discrete_mass(self, resolution=201):
        """Midpoint quadrature of kappa over its support box (a self check)."""
        r = self.support_radius
        h = 2.0 * r / resolution
        axis = -r + (np.arange(resolution) + 0.5) * h
        grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        return float(np.sum(self(pts)) * h ** self.dim)

    @property
    def signature(self):
        p = ",".join(f"{k}={self.params[k]!r}" for k in sorted(self.params))
        return f"kernel({self.profile};{p};delta={self.delta!r};dim={self.dim})"


def build_kernel(profile="bump", delta=1.0, dim=1, **params):
    """Construct a compactly supported dispersal kernel.

    Args:
        profile: registered profile name ("bump": c*(1-|z|^2)^power on the
            unit ball, normalized to unit mass; C^1 at the support edge
            for power >= 2).
        delta: rescaling length; the support radius of the result.
        dim: spatial dimension.
        params: profile parameters (bump: power, default 3).

    Returns:
        Kernel with unit analytic mass and support radius delta.
    """
    if delta <= 0.0 or not math.isfinite(delta):
        raise DiscretizationError(f"delta must be positive, got {delta}")
    if dim < 1:
        raise DiscretizationError(f"dim must be >= 1, got {dim}")
    try:
        factory = _PROFILES[profile]
    except KeyError:
        raise DiscretizationError(
            f"unknown kernel profile {profile!r}; known: {sorted(_PROFILES)}"
        ) from None
    base, norm_params = factory(dim, **params)
    return Kernel(
        profile=profile,
        params=norm_params,
        delta=float(delta),
        dim=int(dim),
        support_radius=float(delta),
        _base=base,
    )


# ---------------------------------------------------------------------------
# domains and grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box, optionally a periodicity cell.

    boundary: one of "dirichlet", "neumann", "periodic".
    box: per-axis (lo, hi) bounds.  For the periodic type the box is the
        cell [0, p_1] x ... x [0, p_N] and extents must equal the periods.
    periods: per-axis periods (periodic type only).
    """

    boundary: str
    box: tuple
    periods: tuple = None

    def __post_init__(self):
        if self.boundary not in _BOUNDARY_TYPES:
            raise DiscretizationError(f"unknown boundary type {self.boundary!r}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        for lo, hi in box:
            if not hi > lo:
                raise DiscretizationError(f"degenerate box extent ({lo}, {hi})")
        if self.boundary == PERIODIC:
            if self.periods is None:
                object.__setattr__(
                    self, "periods", tuple(hi - lo for lo, hi in box)
                )
            else:
                object.__setattr__(
                    self, "periods", tuple(float(p) for p in self.periods)
                )
            for (lo, hi), p in zip(box, self.periods):
                if p <= 0.0 or abs((hi - lo) - p) > 1e-12 * max(1.0, p):
                    raise DiscretizationError(
                        "periodic cell extents must equal the periods"
                    )
        elif self.periods is not None:
            raise DiscretizationError("periods are only meaningful for the periodic type")

    @property
    def dim(self):
        return len(self.box)

    @property
    def extents(self):
        return tuple(hi - lo for lo, hi in self.box)

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @property
    def signature(self):
        return f"domain({self.boundary};box={self.box!r};periods={self.periods!r})"


@dataclass(frozen=True)
class Grid:
    """Tensor midpoint grid: nodes (M, N), uniform weights summing to |box|."""

    nodes: np.ndarray
    weights: np.ndarray
    resolution: tuple
    spacing: tuple
    box: tuple

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def dim(self):
        return self.nodes.shape[1]

    def multi_indices(self):
        """Integer index tuple array of shape (M, N), C-ordered."""
        idx = np.indices(self.resolution).reshape(len(self.resolution), -1).T
        return idx

    @property
    def signature(self):
        return f"grid(res={self.resolution!r};box={self.box!r})"


def build_grid(domain, resolution):
    """Midpoint-rule grid on the domain box.

    resolution: nodes per axis, an int or a per-axis sequence (each >= 2).
    Periodic cells are tiled without duplicating the wrapped endpoint
    (midpoint nodes never touch the cell boundary).
    """
    dim = domain.dim
    if np.isscalar(resolution):
        res = (int(resolution),) * dim
    else:
        res = tuple(int(r) for r in resolution)
        if len(res) != dim:
            raise DiscretizationError(
                f"resolution has {len(res)} axes, domain has {dim}"
            )
    for r in res:
        if r < 2:
            raise DiscretizationError(f"resolution must be >= 2 per axis, got {r}")
    spacing = tuple((hi - lo) / r for (lo, hi), r in zip(domain.box, res))
    idx = np.indices(res).reshape(dim, -1).T
    lo = np.array([b[0] for b in domain.box])
    h = np.array(spacing)
    nodes = lo + (idx + 0.5) * h
    m = nodes.shape[0]
    weights = np.full(m, float(np.prod(spacing)))
    return Grid(nodes=nodes, weights=weights, resolution=res, spacing=spacing,
                box=domain.box)


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NonlocalOperatorMatrix:
    """Discrete nonlocal operator: kernel_part @ u + diagonal_part * u.

    kernel_part: sparse (M, M), entries kappa(x_n - x_m) * w_n, nonnegative,
        wrapped by minimal image for the periodic type (rows normalized to
        unit mass there).
    diagonal_part: length-M boundary correction (-1 for dirichlet/periodic,
        minus the within-domain kernel mass for neumann).
    row_mass: kernel_part row sums (the per-node quadrature kernel mass).
    """

    kernel_part: sparse.csr_matrix
    diagonal_part: np.ndarray
    boundary: str
    row_mass: np.ndarray
    support_radius: float

    @property
    def size(self):
        return self.diagonal_part.shape[0]

    def apply(self, u):
        """Apply to u of shape (M,), (M, K), or (M, K, B)."""
        u = np.asarray(u)
        if u.ndim <= 2:
            ku = self.kernel_part @ u
        else:
            m = u.shape[0]
            ku = (self.kernel_part @ u.reshape(m, -1)).reshape(u.shape)
        shape = (-1,) + (1,) * (u.ndim - 1)
        return ku + self.diagonal_part.reshape(shape) * u

    def transpose_matrix(self):
        return self.kernel_part.T.tocsr()


def _stencil_offsets(kernel, grid):
    """Integer index offsets o with |o * h| < support radius, and kappa there.

    Displacements are formed from index differences times the spacing, so
    equal index offsets give bit-identical kernel values at every node pair
    (exact Toeplitz/circulant structure).
    """
    h = np.array(grid.spacing)
    r = kernel.support_radius
    reach = [int(math.floor(r / hl)) for hl in h]
    ranges = [np.arange(-k, k + 1) for k in reach]
    mesh = np.meshgrid(*ranges, indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=-1)
    disp = offsets * h
    inside = np.sum(disp * disp, axis=-1) < r * r
    offsets = offsets[inside]
    values = kernel(offsets * h)
    keep = values > 0.0
    return offsets[keep], values[keep]


def assemble_nonlocal(kernel, grid, domain):
    """Assemble the discrete nonlocal operator for the domain's boundary type.

    Preconditions: kernel dim equals domain dim; for the periodic type the
    support radius must be below half the smallest period so minimal-image
    wrapping is unambiguous.
    """
    if kernel.dim != domain.dim:
        raise DiscretizationError(
            f"kernel dim {kernel.dim} != domain dim {domain.dim}"
        )
    if domain.boundary == PERIODIC:
        half = min(domain.periods) / 2.0
        if not kernel.support_radius < half:
            raise DiscretizationError(
                f"kernel support {kernel.support_radius} must be below half "
                f"the smallest period ({half}) for minimal-image wrapping"
            )

    m = grid.size
    res = np.array(grid.resolution)
    idx = grid.multi_indices()
    offsets, kvals = _stencil_offsets(kernel, grid)
    w = float(grid.weights[0])  # uniform midpoint weights

    rows_parts, cols_parts, data_parts = [], [], []
    for o, kv in zip(offsets, kvals):
        target = idx + o
        if domain.boundary == PERIODIC:
            cols = np.ravel_multi_index((target % res).T, grid.resolution)
            rows = np.arange(m)
        else:
            valid = np.all((target >= 0) & (target < res), axis=1)
            if not np.any(valid):
                continue
            cols = np.ravel_multi_index(target[valid].T, grid.resolution)
            rows = np.nonzero(valid)[0]
        rows_parts.append(rows)
        cols_parts.append(cols)
        data_parts.append(np.full(rows.shape[0], kv * w))

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    data = np.concatenate(data_parts)
    kernel_part = sparse.coo_matrix((data, (rows, cols)), shape=(m, m)).tocsr()

    if domain.boundary == PERIODIC:
        # Wrapped rows all carry the full offset stencil; normalize the
        # common row mass to one (the wrapped kernel has unit mass).
        total = float(np.sum(kvals)) * w
        kernel_part = kernel_part * (1.0 / total)

    ones = np.ones(m)
    row_mass = kernel_part @ ones
    if domain.boundary == DIRICHLET or domain.boundary == PERIODIC:
        diagonal = np.full(m, -1.0)
    else:
        diagonal = -row_mass  # exact cancellation: apply() on constants is 0
    return NonlocalOperatorMatrix(
        kernel_part=kernel_part,
        diagonal_part=diagonal,
        boundary=domain.boundary,
        row_mass=row_mass,
        support_radius=kernel.support_radius,
    )
