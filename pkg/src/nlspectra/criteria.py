"""Existence criteria for the principal eigenvalue, evaluated mechanically.

The decisive test is the margin criterion: the principal spectrum point is
a genuine principal eigenvalue exactly when it clears the band top max h.
The remaining checks evaluate sufficient conditions on computed fields:

  l1 divergence      1/(max h - h(x)) fails to be integrable near the
                     maximizer (decided by a local power-law fit: the
                     integral of |x - x0|^{-p} over an N-ball diverges
                     exactly when p >= N),
  vanishing          partial derivatives of h vanish through order N-1 at
                     the maximizer (finite-difference estimates),
  oscillation bound  spatial oscillation of the pointwise exponent stays
                     below (eta/eta_tilde) times the minimal kernel mass
                     (dirichlet) or times one (periodic); open for the
                     neumann type and reported as such,
  small-scale sweep  re-assembly with rescaled kernels: margins grow as
                     the dispersal scale shrinks.

Sufficient conditions must never contradict the margin verdict; report
assembly enforces that soundness and fails hard on violations.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import discretization as dz


class CriteriaError(ValueError):
    pass


class SoundnessError(RuntimeError):
    """A sufficient condition fired on a non-existent verdict: a logic or
    numerics bug, never a data outcome."""


EXISTS = "exists"
NOT_EXISTS = "not_exists_at_resolution"
NOT_COVERED = "not_covered"


# ---------------------------------------------------------------------------
# margin criterion
# ---------------------------------------------------------------------------

@dataclass
class ExistenceVerdict:
    verdict: str
    margin: float
    margin_tol: float
    lambda_principal: float
    max_h: float
    fingerprint: str

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "margin": self.margin,
            "margin_tol": self.margin_tol,
            "lambda_principal": self.lambda_principal,
            "max_h": self.max_h,
        }


def check_existence(spectrum, field, margin_tol):
    """Margin criterion: exists iff lambda_principal - max h > margin_tol."""
    if spectrum.fingerprint != field.fingerprint:
        raise CriteriaError(
            f"mismatched system fingerprints: spectrum {spectrum.fingerprint} "
            f"vs pointwise field {field.fingerprint}"
        )
    margin = spectrum.lambda_principal - field.max_h
    verdict = EXISTS if margin > margin_tol else NOT_EXISTS
    return ExistenceVerdict(
        verdict=verdict, margin=float(margin), margin_tol=float(margin_tol),
        lambda_principal=float(spectrum.lambda_principal),
        max_h=float(field.max_h), fingerprint=spectrum.fingerprint,
    )


# ---------------------------------------------------------------------------
# local non-integrability fit
# ---------------------------------------------------------------------------

@dataclass
class DivergenceCheck:
    flag: bool
    status: str                 # "fit" | "degenerate_constant" | "boundary_max"
    exponent: float = None
    fit_residual: float = None
    points_used: int = 0
    note: str = ""

    def to_dict(self):
        return {
            "flag": self.flag, "status": self.status,
            "exponent": self.exponent, "fit_residual": self.fit_residual,
            "points_used": self.points_used, "note": self.note,
        }


def _argmax_interior(field, grid):
    idx = grid.multi_indices()[field.argmax_h]
    res = np.array(grid.resolution)
    return bool(np.all(idx > 0) and np.all(idx < res - 1)), idx


def check_l1_divergence(field, grid, dim, min_points=None):
    """Fit max_h - h(x) ~ C |x - x0|^p near the maximizer; divergent iff p >= dim.

    The fit is a log-log regression over the nearest usable nodes (the
    smallest neighborhood with enough points).  Boundary maxima are
    flagged unresolved; constant fields are trivially divergent (the
    reciprocal blows up on a set of positive measure).
    """
    h = field.h_field
    scale = max(abs(field.max_h), field.max_h - field.min_h, 1e-30)
    if field.max_h - field.min_h <= 1e-12 * scale:
        return DivergenceCheck(
            flag=True, status="degenerate_constant",
            note="band field is constant at this resolution; "
                 "1/(alpha - h) blows up on the whole domain",
        )
    interior, _ = _argmax_interior(field, grid)
    if not interior:
        return DivergenceCheck(
            flag=False, status="boundary_max",
            note="maximizer on the sampled boundary layer; neighborhood "
                 "fit unresolved at this resolution",
        )
    if min_points is None:
        min_points = max(6, 2 * dim + 2)
    x0 = grid.nodes[field.argmax_h]
    d2 = np.sum((grid.nodes - x0) ** 2, axis=1)
    g = field.max_h - h
    usable = (d2 > 0.0) & (g > 1e-13 * scale)
    if int(np.sum(usable)) < min_points:
        raise CriteriaError(
            "not enough usable nodes near the maximizer for the local fit; "
            "increase the resolution"
        )
    order = np.argsort(d2[usable])
    dist = np.sqrt(d2[usable][order][:min_points])
    vals = g[usable][order][:min_points]
    logs_d = np.log(dist)
    logs_g = np.log(vals)
    coeffs, residuals, *_ = np.polyfit(logs_d, logs_g, 1, full=True)
    p = float(coeffs[0])
    res_rms = float(np.sqrt(residuals[0] / len(dist))) if len(residuals) else 0.0
    return DivergenceCheck(
        flag=bool(p >= dim), status="fit", exponent=p, fit_residual=res_rms,
        points_used=int(len(dist)),
    )


# ---------------------------------------------------------------------------
# vanishing (flatness) condition
# ---------------------------------------------------------------------------

@dataclass
class VanishingCheck:
    flag: bool
    status: str                        # "ok" | "vacuous" | "boundary_max"
    derivative_orders: dict = dc_field(default_factory=dict)
    tolerances: dict = dc_field(default_factory=dict)
    note: str = ""

    def to_dict(self):
        return {
            "flag": self.flag, "status": self.status,
            "derivative_orders": {str(k): v for k, v in self.derivative_orders.items()},
            "tolerances": {str(k): v for k, v in self.tolerances.items()},
            "note": self.note,
        }


def check_vanishing_condition(field, grid, dim):
    """Flatness of h at the maximizer through order dim - 1.

    Centered finite differences on the grid; tolerances are scale-aware,
    |D^beta h| < 1e-3 * scale(h) * spacing^(dim - 1 - |beta|), so node
    offset from the true maximizer (which contaminates low orders by one
    power of the spacing per missing order) is not flagged as a genuine
    derivative.
    """
    interior, idx = _argmax_interior(field, grid)
    if dim == 1:
        if interior:
            return VanishingCheck(
                flag=True, status="vacuous",
                note="no derivatives below order 1; an interior maximum "
                     "suffices in one dimension",
            )
        return VanishingCheck(
            flag=False, status="boundary_max",
            note="maximizer on the sampled boundary layer",
        )
    if not interior:
        raise CriteriaError(
            "finite-difference stencil exits the domain: the maximizer "
            "sits on the sampled boundary layer"
        )
    h = field.h_field.reshape(grid.resolution)
    spacing = np.array(grid.spacing)
    max_sp = float(np.max(spacing))
    scale = max(abs(field.max_h), field.max_h - field.min_h, 1e-30)

    def at(offset):
        return h[tuple(idx + np.asarray(offset))]

    estimates = {}
    # order 1: gradient
    grad = []
    for l in range(dim):
        e = np.zeros(dim, dtype=int)
        e[l] = 1
        grad.append((at(e) - at(-e)) / (2.0 * spacing[l]))
    estimates[1] = float(np.max(np.abs(grad)))
    # order 2 (needed when dim >= 3): pure and mixed second differences
    if dim >= 3:
        second = []
        for l in range(dim):
            e = np.zeros(dim, dtype=int)
            e[l] = 1
            second.append((at(e) - 2.0 * at(np.zeros(dim, dtype=int)) + at(-e))
                          / spacing[l] ** 2)
        for l in range(dim):
            for j in range(l + 1, dim):
                el = np.zeros(dim, dtype=int)
                ej = np.zeros(dim, dtype=int)
                el[l] = 1
                ej[j] = 1
                second.append(
                    (at(el + ej) - at(el - ej) - at(-el + ej) + at(-el - ej))
                    / (4.0 * spacing[l] * spacing[j])
                )
        estimates[2] = float(np.max(np.abs(second)))

    tolerances = {}
    ok = True
    for order, value in estimates.items():
        tol = 1e-3 * scale * max_sp ** max(0, dim - 1 - order)
        tolerances[order] = tol
        if value >= tol:
            ok = False
    return VanishingCheck(
        flag=ok, status="ok", derivative_orders=estimates, tolerances=tolerances,
    )


# ---------------------------------------------------------------------------
# oscillation bound
# ---------------------------------------------------------------------------

@dataclass
class OscillationCheck:
    status: str                 # "satisfied" | "not_satisfied" | "not_covered"
    lhs: float = None
    rhs: float = None
    eta: float = None
    eta_tilde: float = None
    mass_min: float = None
    note: str = ""

    @property
    def flag(self):
        return self.status == "satisfied"

    def to_dict(self):
        return {
            "status": self.status, "lhs": self.lhs, "rhs": self.rhs,
            "eta": self.eta, "eta_tilde": self.eta_tilde,
            "mass_min": self.mass_min, "note": self.note,
        }


def check_oscillation_bound(field, kernel, grid, domain, operator=None):
    """Oscillation of the pointwise exponent against the eigenfunction spread.

    LHS = max lambda(x) - min lambda(x); RHS = (eta/eta_tilde) times the
    minimal within-domain kernel mass (dirichlet) or times one (periodic,
    where the wrapped mass is one).  Whether anything analogous holds for
    the neumann type is open; reported as not covered.
    """
    if domain.boundary == dz.NEUMANN:
        return OscillationCheck(
            status=NOT_COVERED,
            note="no oscillation bound is available for the neumann type",
        )
    lhs = float(np.max(field.lambda_field) - np.min(field.lambda_field))
    if domain.boundary == dz.DIRICHLET:
        if operator is None:
            operator = dz.assemble_nonlocal(kernel, grid, domain)
        mass_min = float(np.min(operator.row_mass))
    else:
        mass_min = 1.0
    rhs = (field.eta / field.eta_tilde) * mass_min
    status = "satisfied" if lhs < rhs else "not_satisfied"
    return OscillationCheck(
        status=status, lhs=lhs, rhs=float(rhs), eta=field.eta,
        eta_tilde=field.eta_tilde, mass_min=mass_min,
    )


# ---------------------------------------------------------------------------
# dispersal-scale sweep
# ---------------------------------------------------------------------------

@dataclass
class DeltaSweepRow:
    delta: float
    resolution: tuple = None
    lambda_principal: float = None
    max_h: float = None
    margin: float = None
    verdict: str = None
    skipped: bool = False
    note: str = ""

    def to_dict(self):
        return {
            "delta": self.delta,
            "resolution": list(self.resolution) if self.resolution else None,
            "lambda_principal": self.lambda_principal, "max_h": self.max_h,
            "margin": self.margin, "verdict": self.verdict,
            "skipped": self.skipped, "note": self.note,
        }


@dataclass
class DeltaSweepResult:
    rows: list
    threshold_consistent: bool
    note: str = ""

    def to_dict(self):
        return {
            "rows": [r.to_dict() for r in self.rows],
            "threshold_consistent": self.threshold_consistent,
            "note": self.note,
        }


def check_small_delta(template, deltas, threads=1):
    """Sweep the kernel scale: re-assemble and test existence per delta.

    The template is a run configuration; the per-axis resolution grows as
    delta shrinks so the node spacing tracks delta (nodes_per_radius
    nodes per kernel radius, capped by max_state_dim).  A delta whose
    kernel support falls under one grid cell is skipped with a guard note.

    Returns the table sorted by descending delta, plus a
    monotone-threshold consistency bit: every delta below the largest one
    with a positive margin must also report existence.
    """
    from .config import build_problem, with_overrides
    from .spectral_engine import principal_spectrum_point
    from .util import parallel_map

    if not deltas or any(d <= 0 for d in deltas):
        raise CriteriaError("deltas must be a nonempty list of positive reals")
    if template.kernel.profile != "bump":
        raise CriteriaError(
            "the rescaling sweep requires a symmetric unit-ball profile"
        )
    deltas = sorted(set(float(d) for d in deltas), reverse=True)
    npr = template.command.nodes_per_radius
    extents = [hi - lo for lo, hi in template.domain.box]
    base_res = template.numerics.resolution

    def run_one(delta):
        res = tuple(
            max(r, int(math.ceil(ext * npr / delta)))
            for r, ext in zip(base_res, extents)
        )
        state = int(np.prod(res)) * template.coupling.k
        if state > template.numerics.max_state_dim:
            return DeltaSweepRow(
                delta=delta, resolution=res, skipped=True,
                note=f"state dimension {state} exceeds the cap "
                     f"{template.numerics.max_state_dim}",
            )
        spacing = max(ext / r for ext, r in zip(extents, res))
        if spacing > delta:
            return DeltaSweepRow(
                delta=delta, resolution=res, skipped=True,
                note="kernel support falls under one grid cell at the "
                     "admissible resolution",
            )
        cfg = with_overrides(template, kernel_delta=delta, resolution=res)
        problem = build_problem(cfg)
        spectrum = principal_spectrum_point(
            problem.system, tol=cfg.numerics.power_tol,
            max_iter=cfg.numerics.power_max_iter,
            dense_cap=cfg.numerics.dense_cap, gap=False,
        )
        pw = problem.system.pointwise_field()
        verdict = check_existence(spectrum, pw, cfg.numerics.margin_tol)
        return DeltaSweepRow(
            delta=delta, resolution=res,
            lambda_principal=spectrum.lambda_principal, max_h=pw.max_h,
            margin=verdict.margin, verdict=verdict.verdict,
        )

    rows = parallel_map(run_one, deltas, threads=threads)
    active = [r for r in rows if not r.skipped]
    threshold = next((r.delta for r in active if r.margin > 0.0), None)
    consistent = True
    if threshold is not None:
        consistent = all(
            r.verdict == EXISTS for r in active
            if r.delta <= threshold and r.margin is not None
        )
    return DeltaSweepResult(
        rows=rows, threshold_consistent=consistent,
        note="monotone-threshold report at the sampled scales, not a proof",
    )


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass
class CriteriaReport:
    max_h: float
    min_h: float
    lambda_principal: float
    existence: ExistenceVerdict
    l1_divergence: DivergenceCheck = None
    vanishing: VanishingCheck = None
    oscillation: OscillationCheck = None
    delta_sweep: DeltaSweepResult = None
    eps_grid: float = None
    fingerprint: str = ""
    notes: tuple = ()

    def to_dict(self):
        return {
            "max_h": self.max_h,
            "min_h": self.min_h,
            "lambda_principal": self.lambda_principal,
            "existence": self.existence.to_dict(),
            "l1_divergence": self.l1_divergence.to_dict() if self.l1_divergence else None,
            "vanishing": self.vanishing.to_dict() if self.vanishing else None,
            "oscillation": self.oscillation.to_dict() if self.oscillation else None,
            "delta_sweep": self.delta_sweep.to_dict() if self.delta_sweep else None,
            "eps_grid": self.eps_grid,
            "fingerprint": self.fingerprint,
            "notes": list(self.notes),
        }

    def render_text(self):
        lines = [
            "principal eigenvalue criteria report",
            f"  fingerprint        {self.fingerprint}",
            f"  band               [{self.min_h:.9g}, {self.max_h:.9g}]",
            f"  principal point    {self.lambda_principal:.9g}",
            f"  margin             {self.existence.margin:.9g} "
            f"(tol {self.existence.margin_tol:.3g})",
            f"  verdict            {self.existence.verdict}",
        ]
        if self.eps_grid is not None:
            lines.append(f"  grid atom          {self.eps_grid:.3g}")
        if self.l1_divergence is not None:
            d = self.l1_divergence
            extra = f", p = {d.exponent:.3f}" if d.exponent is not None else ""
            lines.append(f"  l1 divergence      {d.flag} ({d.status}{extra})")
        if self.vanishing is not None:
            v = self.vanishing
            lines.append(f"  vanishing          {v.flag} ({v.status})")
        if self.oscillation is not None:
            o = self.oscillation
            if o.status == NOT_COVERED:
                lines.append("  oscillation        not covered (neumann type)")
            else:
                lines.append(
                    f"  oscillation        {o.status} "
                    f"(lhs {o.lhs:.6g} vs rhs {o.rhs:.6g})"
                )
        if self.delta_sweep is not None:
            lines.append("  scale sweep:")
            for r in self.delta_sweep.rows:
                if r.skipped:
                    lines.append(f"    delta {r.delta:<8g} skipped: {r.note}")
                else:
                    lines.append(
                        f"    delta {r.delta:<8g} margin {r.margin:.6g} "
                        f"-> {r.verdict}"
                    )
        for n in self.notes:
            lines.append(f"  note: {n}")
        return "\n".join(lines)


def assemble_report(existence, field, spectrum, l1=None, vanishing=None,
                    oscillation=None, sweep=None, eps_grid=None, notes=()):
    """Compose the verdict report and enforce soundness cross-assertions.

    Sufficient-condition flags must imply the margin verdict, and the
    flatness condition must imply the divergence condition; violations
    are numerical or logic bugs and raise SoundnessError.
    """
    if spectrum.fingerprint != field.fingerprint:
        raise CriteriaError(
            f"mismatched system fingerprints: spectrum {spectrum.fingerprint} "
            f"vs pointwise field {field.fingerprint}"
        )
    if existence.fingerprint != field.fingerprint:
        raise CriteriaError("existence verdict belongs to a different system")
    for name, check in (("l1 divergence", l1), ("vanishing", vanishing),
                        ("oscillation bound", oscillation)):
        if check is not None and check.flag and existence.verdict != EXISTS:
            raise SoundnessError(
                f"{name} premise holds but the margin verdict is "
                f"{existence.verdict}: sufficient-condition soundness violated"
            )
    if (vanishing is not None and vanishing.flag
            and l1 is not None and not l1.flag):
        raise SoundnessError(
            "flatness condition holds but the divergence fit does not: "
            "the two are ordered by implication"
        )
    return CriteriaReport(
        max_h=field.max_h,
        min_h=field.min_h,
        lambda_principal=spectrum.lambda_principal,
        existence=existence,
        l1_divergence=l1,
        vanishing=vanishing,
        oscillation=oscillation,
        delta_sweep=sweep,
        eps_grid=eps_grid,
        fingerprint=field.fingerprint,
        notes=tuple(notes),
    )
