"""Shared builders and the seeded random instance suite."""

import numpy as np
import pytest

from nlspectra import (DIRICHLET, NEUMANN, PERIODIC, CouplingField, DomainSpec,
                       build_grid, build_kernel, build_system)


def make_problem(boundary=DIRICHLET, box=((0.0, 1.0),), resolution=24,
                 delta=0.3, entries=(("0",),), k=1, period=1.0, steps=256,
                 **system_kw):
    """Assemble a full system from compact arguments."""
    domain = DomainSpec(boundary=boundary, box=box)
    dim = domain.dim
    kernel = build_kernel("bump", delta=delta, dim=dim)
    grid = build_grid(domain, resolution)
    field = CouplingField(
        k=k, period=period, dim=dim,
        entries=[list(row) for row in entries],
        periods=domain.periods if boundary == PERIODIC else None,
        box=domain.box,
    )
    system = build_system(kernel, grid, domain, field, steps=steps, **system_kw)
    return system


def constant_neumann_system(resolution=32, steps=256):
    return make_problem(
        boundary=NEUMANN, resolution=resolution, delta=0.3,
        entries=[["0", "1"], ["1", "0"]], k=2, steps=steps,
    )


def _fmt(value):
    return repr(round(float(value), 6))


def random_entries(rng, k, boundary):
    """K x K expression matrix with guaranteed cooperativity/irreducibility.

    Off-diagonal entries are positive constants plus optional nonnegative
    time terms; diagonals mix constants, time harmonics, and a spatial
    bump (trigonometric on periodic cells, polynomial otherwise).
    """
    entries = []
    for i in range(k):
        row = []
        for j in range(k):
            if i == j:
                c0 = rng.uniform(-0.5, 0.8)
                ct = rng.uniform(0.0, 0.4)
                cx = rng.uniform(0.1, 0.8)
                x0 = round(rng.uniform(0.35, 0.65), 3)
                if boundary == PERIODIC:
                    spatial = f"{_fmt(cx)}*cos_x1"
                else:
                    spatial = f"(-{_fmt(cx)})*(x1-{x0})^2"
                row.append(f"{_fmt(c0)} + {_fmt(ct)}*cos_t + {spatial}")
            else:
                base = rng.uniform(0.3, 1.2)
                wobble = rng.uniform(0.0, 0.3)
                row.append(f"{_fmt(base)} + {_fmt(wobble)} + {_fmt(wobble)}*sin_t")
        entries.append(row)
    return entries


def random_instance(seed, boundary=None, resolution=24, steps=256):
    """Seeded random 1-d instance satisfying both structural hypotheses."""
    rng = np.random.default_rng(seed)
    if boundary is None:
        boundary = (DIRICHLET, NEUMANN, PERIODIC)[int(rng.integers(0, 3))]
    k = int(rng.integers(1, 4))
    period = float(rng.choice([0.7, 1.0, 1.3]))
    delta = float(rng.uniform(0.2, 0.35))
    entries = random_entries(rng, k, boundary)
    return make_problem(
        boundary=boundary, resolution=resolution, delta=delta,
        entries=entries, k=k, period=period, steps=steps,
    )


@pytest.fixture(scope="session")
def neumann_constant():
    return constant_neumann_system()
