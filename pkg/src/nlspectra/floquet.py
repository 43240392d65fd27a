"""Pointwise Floquet analysis of the coupling field.

At each spatial point x the K x K periodic system

    phi'(t) = A(t, x) phi(t),    phi(t + T) = phi(t) * e^{lambda T}

has a distinguished real exponent lambda(x) = ln(r(U(T; x))) / T, where
U(t; x) is the fundamental matrix solution of U' = A(t, x) U, U(0) = I,
and r is the spectral radius.  Under cooperativity and irreducibility
U(T; x) is (strictly) positive, the radius is a simple Perron root, and
the associated periodic eigenfunction

    phi(t, x) = e^{-lambda(x) t} U(t; x) phi0(x),   |phi0(x)| = 1

is entrywise positive.  The pointwise band field

    h(x) = -1 + lambda(x)                    (dirichlet, periodic)
    h(x) = -m(x) + lambda(x)                 (neumann; m = local kernel mass)

bounds the spectrum of the multiplication part of the full dispersal
operator; its maximum is the threshold the principal spectrum point must
clear for a genuine principal eigenvalue.
"""

from dataclasses import dataclass

import numpy as np

from . import discretization as dz
from .util import fingerprint


class FloquetError(RuntimeError):
    pass


@dataclass
class MonodromyMatrix:
    """Fundamental matrix over one period at a single point."""

    u: np.ndarray          # (K, K)
    x: np.ndarray
    steps: int
    period: float
    residual: float        # local error estimate of the final step


@dataclass
class FloquetPointResult:
    """Perron exponent and eigenfunction data at a single point."""

    lambda_x: float
    phi0: np.ndarray               # positive unit eigenvector at t = 0
    iterations: int
    phi_traj: np.ndarray = None    # (mesh + 1, K) samples over [0, T]
    time_mesh: np.ndarray = None
    periodicity_defect: float = None


@dataclass
class PointwiseField:
    """Per-node Floquet data over a grid, plus the band field h."""

    lambda_field: np.ndarray       # (M,)
    h_field: np.ndarray            # (M,)
    phi0: np.ndarray               # (M, K)
    phi_traj: np.ndarray           # (S + 1, M, K)
    time_mesh: np.ndarray
    eta: float                     # global min of eigenfunction components
    eta_tilde: float               # global max
    argmax_h: int
    max_h: float
    min_h: float
    boundary: str
    kernel_mass: np.ndarray        # (M,) per-node quadrature kernel mass
    defect_max: float
    fingerprint: str = ""


def _batch_rk4(field, points, steps, store=False):
    """Integrate U' = A(t, x_m) U over [0, T] for all points at once.

    Returns (U_end (M, K, K), traj or None (steps+1, M, K, K), residual (M,)).
    The residual is a per-node local error estimate of the last step
    (full step against two half steps).
    """
    m = points.shape[0]
    k = field.k
    t_total = field.period
    dt = t_total / steps
    u = np.broadcast_to(np.eye(k), (m, k, k)).copy()
    traj = np.empty((steps + 1, m, k, k)) if store else None
    if store:
        traj[0] = u

    def deriv(t, w):
        a = field.sample_batch(t, points)
        return np.matmul(a, w)

    def rk4_step(t, w, h):
        k1 = deriv(t, w)
        k2 = deriv(t + 0.5 * h, w + 0.5 * h * k1)
        k3 = deriv(t + 0.5 * h, w + 0.5 * h * k2)
        k4 = deriv(t + h, w + h * k3)
        return w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    for j in range(steps):
        t = j * dt
        u_next = rk4_step(t, u, dt)
        if j == steps - 1:
            half = rk4_step(t + 0.5 * dt, rk4_step(t, u, 0.5 * dt), 0.5 * dt)
            residual = np.sqrt(np.sum((u_next - half) ** 2, axis=(1, 2)))
        u = u_next
        if store:
            traj[j + 1] = u
        if not np.all(np.isfinite(u)):
            bad = np.nonzero(~np.isfinite(u).all(axis=(1, 2)))[0]
            raise FloquetError(
                f"monodromy integration overflowed at t={t + dt:.6g} "
                f"for node indices {bad[:5].tolist()}"
            )
    return u, traj, residual


def integrate_monodromy(field, x, steps=256):
    """Fundamental matrix U(T; x) of the pointwise system by classical RK4."""
    if steps < 16:
        raise FloquetError(f"steps must be >= 16, got {steps}")
    x = np.asarray(x, dtype=float).reshape(1, field.dim)
    u, _, residual = _batch_rk4(field, x, steps)
    return MonodromyMatrix(
        u=u[0], x=x[0], steps=steps, period=field.period,
        residual=float(residual[0]),
    )


def _perron_batch(u_batch, tol=1e-12, max_iter=2000):
    """Perron root and positive unit eigenvector of each (K, K) block.

    Power iteration from the all-ones direction (strictly positive, never
    orthogonal to the Perron eigenvector).  Convergence is measured on the
    successive-iterate distance; stalls are reported, not accepted.
    """
    m, k, _ = u_batch.shape
    v = np.full((m, k), 1.0 / np.sqrt(k))
    its = 0
    for its in range(1, max_iter + 1):
        w = np.einsum("mkl,ml->mk", u_batch, v)
        norms = np.sqrt(np.sum(w * w, axis=1))
        if np.any(norms <= 0.0) or not np.all(np.isfinite(norms)):
            bad = np.nonzero(~(norms > 0.0))[0]
            raise FloquetError(
                f"power iteration degenerated at node indices {bad[:5].tolist()}"
            )
        v_new = w / norms[:, None]
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta < tol:
            break
    else:
        raise FloquetError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(last change {delta:.3g}); near-degenerate dominant pair"
        )
    roots = np.einsum("mk,mkl,ml->m", v, u_batch, v)
    return roots, v, its


def pointwise_eigenpair(monodromy, tol=1e-12, max_iter=2000):
    """Perron pair of a monodromy matrix: lambda = ln(root) / T."""
    u = np.asarray(monodromy.u, dtype=float)[None, :, :]
    roots, v, its = _perron_batch(u, tol=tol, max_iter=max_iter)
    if roots[0] <= 0.0:
        raise FloquetError(f"nonpositive Perron root estimate {roots[0]}")
    lam = float(np.log(roots[0]) / monodromy.period)
    return FloquetPointResult(lambda_x=lam, phi0=v[0], iterations=its)


def periodic_eigenfunction(field, x, result, mesh=256, defect_tol=1e-6):
    """Sample phi(t, x) = e^{-lambda t} U(t; x) phi0 on a uniform mesh of [0, T].

    Fills result.phi_traj / result.periodicity_defect and returns the
    samples; a defect above defect_tol means the integration accuracy does
    not support the requested mesh and is reported as a failure.
    """
    x = np.asarray(x, dtype=float).reshape(1, field.dim)
    _, traj, _ = _batch_rk4(field, x, mesh, store=True)
    t_mesh = np.arange(mesh + 1) * (field.period / mesh)
    samples = np.einsum("jkl,l->jk", traj[:, 0], result.phi0)
    samples *= np.exp(-result.lambda_x * t_mesh)[:, None]
    defect = float(np.sqrt(np.sum((samples[-1] - samples[0]) ** 2)))
    result.phi_traj = samples
    result.time_mesh = t_mesh
    result.periodicity_defect = defect
    if defect > defect_tol:
        raise FloquetError(
            f"periodicity defect {defect:.3g} exceeds {defect_tol:.3g}; "
            "increase integration steps"
        )
    if np.min(samples) <= 0.0:
        raise FloquetError("eigenfunction trajectory lost positivity")
    return samples


def compute_pointwise_field(field, grid, kernel, domain, steps=256,
                            tol=1e-12, operator=None):
    """Floquet data at every grid node, band field, and component extrema.

    The neumann band field uses the same per-node quadrature kernel mass
    as the assembled operator; pass `operator` to reuse an existing
    assembly (it is rebuilt otherwise).
    """
    u_end, traj, _ = _batch_rk4(field, grid.nodes, steps, store=True)
    roots, phi0, _ = _perron_batch(u_end, tol=tol)
    if np.any(roots <= 0.0):
        raise FloquetError("nonpositive Perron root in pointwise field")
    lam = np.log(roots) / field.period

    t_mesh = np.arange(steps + 1) * (field.period / steps)
    phi_traj = np.einsum("jmkl,ml->jmk", traj, phi0)
    phi_traj *= np.exp(-np.outer(t_mesh, lam))[:, :, None]
    defects = np.sqrt(np.sum((phi_traj[-1] - phi_traj[0]) ** 2, axis=1))

    if operator is None:
        operator = dz.assemble_nonlocal(kernel, grid, domain)
    if domain.boundary == dz.NEUMANN:
        mass = operator.row_mass
        h = -mass + lam
    else:
        mass = operator.row_mass
        h = -1.0 + lam

    eta = float(np.min(phi_traj[:-1]))
    eta_tilde = float(np.max(phi_traj[:-1]))
    if not eta > 0.0:
        raise FloquetError(
            "pointwise eigenfunctions are not strictly positive; "
            "check cooperativity/irreducibility of the coupling"
        )
    argmax = int(np.argmax(h))
    fp = fingerprint(kernel.signature, grid.signature, domain.signature,
                     field.signature, f"steps={steps}")
    return PointwiseField(
        lambda_field=lam,
        h_field=h,
        phi0=phi0,
        phi_traj=phi_traj,
        time_mesh=t_mesh,
        eta=eta,
        eta_tilde=eta_tilde,
        argmax_h=argmax,
        max_h=float(h[argmax]),
        min_h=float(np.min(h)),
        boundary=domain.boundary,
        kernel_mass=mass,
        defect_max=float(np.max(defects)),
        fingerprint=fp,
    )
