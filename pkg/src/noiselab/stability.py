"""Noise-stability functionals for sets and partitions.

The noise stability of a set A at correlation rho is P((X, Y) in A x A) for a
rho-correlated standard Gaussian pair, equivalently the integral of
1_A * T_rho 1_A against the Gaussian measure.  For a partition the cell
stabilities are summed; the bilinear form pairs two partitions,
sum_i P(X in p_i, Y in q_i).

Monte Carlo estimates share one correlated-pair stream across all cells (one
membership evaluation per point), so comparisons between candidate partitions
run with positively correlated errors when they reuse a seed.  Closed forms
and deterministic quadratures are used where the geometry allows: half-space
pairs reduce to the bivariate normal CDF, planar sector-like partitions to
the shifted-sector quadrature, and rho = 0 to sums of squared measures.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

from .gauss import (
    CLOSED_FORM,
    QUADRATURE,
    DomainError,
    Estimate,
    VectorEstimate,
    as_rho,
    bivariate_normal_cdf,
    make_seedseq,
    mc_mean,
    spawn_rngs,
)
from .partitions import (
    PartitionSpec,
    ProductWithR,
    SetSpec,
    _halfspace_side,
    gaussian_measure,
    shifted_sector_moment,
    shifted_sector_pair_stability,
    shifted_sector_stability,
)

def _correlated_values(membership_match, rho, d):
    sig = math.sqrt(1.0 - rho * rho)

    def values(rng, k):
        x = rng.standard_normal((k, d))
        y = rho * x + sig * rng.standard_normal((k, d))
        return membership_match(x, y)

    return values


def noise_stability(s: SetSpec, rho, budget: int = 1_000_000, *, seed=0,
                    threads: int = 1, mode: str = "auto") -> Estimate:
    """P((X, Y) in s x s) for a rho-correlated Gaussian pair."""
    r = as_rho(rho)
    if mode in ("auto", "quadrature"):
        if r == 0.0:
            mu = gaussian_measure(s, budget, seed=seed, threads=threads)
            return Estimate(mu.value**2, 2 * mu.value * mu.std_error, mu.samples, mu.method)
        exact = _set_stability_exact(s, r)
        if exact is not None:
            return exact
        if mode == "quadrature":
            raise DomainError("no quadrature route for this set")

    def match(x, y):
        return (s.contains(x) & s.contains(y)).astype(float)

    return mc_mean(_correlated_values(match, r, s.dim), budget, seed=seed, threads=threads)


def _set_stability_exact(s: SetSpec, rho: float) -> Estimate | None:
    side = _halfspace_side(s)
    if side is not None:
        n, a, le = side
        inside = bivariate_normal_cdf(a, a, rho)
        if le:
            return Estimate(inside, 1e-10, 0, QUADRATURE)
        return Estimate(1.0 - 2.0 * ndtr(a) + inside, 1e-10, 0, QUADRATURE)
    deco = s.sector_decomposition()
    if deco is not None:
        apex, arcs = deco
        if len(arcs) == 1:
            a, b = arcs[0]
            val = shifted_sector_stability(apex, a, b, rho)
            return Estimate(val, 1e-9, 0, QUADRATURE)
    if isinstance(s, ProductWithR):
        return _set_stability_exact(s.base, rho)
    return None


def partition_stability(p: PartitionSpec, rho, budget: int = 1_000_000, *, seed=0,
                        threads: int = 1, mode: str = "auto") -> Estimate:
    """sum_i P((X, Y) in cell_i x cell_i), shared pairs across cells."""
    r = as_rho(rho)
    if mode in ("auto", "quadrature"):
        if r == 0.0:
            return _stability_at_zero(p, budget, seed=seed, threads=threads)
        exact = partition_stability_quadrature(p, r)
        if exact is not None:
            return exact
        if mode == "quadrature":
            raise DomainError("no quadrature route for this partition")
    if r == 0.0:
        return _stability_at_zero(p, budget, seed=seed, threads=threads)

    def match(x, y):
        return (p.membership(x) == p.membership(y)).astype(float)

    return mc_mean(_correlated_values(match, r, p.dim), budget, seed=seed, threads=threads)


def _stability_at_zero(p: PartitionSpec, budget, *, seed, threads) -> Estimate:
    # independence: the stability is the sum of squared cell measures
    total, err, samples = 0.0, 0.0, 0
    method = CLOSED_FORM
    root = make_seedseq(seed).generate_state(1)[0]
    for k, cell in enumerate(p.cells):
        mu = gaussian_measure(cell, budget, seed=[root, k], threads=threads)
        total += mu.value**2
        err += 2 * abs(mu.value) * mu.std_error
        samples += mu.samples
        if mu.method != CLOSED_FORM:
            method = mu.method
    return Estimate(total, err, samples, method)


def partition_stability_quadrature(p: PartitionSpec, rho: float) -> Estimate | None:
    """Deterministic stability for the structured partition families.

    Handles cylinders over a supported base, half-space pairs in any
    dimension, and planar partitions whose cells are (shifted) sectors.
    """
    cells = p.cells
    if all(isinstance(c, ProductWithR) for c in cells):
        extra = cells[0].extra
        if all(c.extra == extra for c in cells):
            return partition_stability_quadrature(PartitionSpec([c.base for c in cells]), rho)
    if p.m == 2:
        si = _halfspace_side(cells[0])
        sj = _halfspace_side(cells[1])
        if si is not None and sj is not None:
            n, a, le = si if si[2] else sj
            inside = bivariate_normal_cdf(a, a, rho)
            val = 1.0 - 2.0 * ndtr(a) + 2.0 * inside
            return Estimate(val, 2e-10, 0, QUADRATURE)
    decos = [c.sector_decomposition() for c in cells]
    if p.dim == 2 and all(d is not None and len(d[1]) == 1 for d in decos):
        total = 0.0
        for apex, arcs in decos:
            a, b = arcs[0]
            total += shifted_sector_stability(apex, a, b, rho)
        return Estimate(total, 1e-9 * p.m, 0, QUADRATURE)
    return None


def bilinear_stability(p: PartitionSpec, q: PartitionSpec, rho,
                       budget: int = 1_000_000, *, seed=0, threads: int = 1,
                       mode: str = "auto", measure_tol_scale: float = 1.0) -> Estimate:
    """sum_i P(X in p_i, Y in q_i) for a rho-correlated pair.

    Requires matching dimension and cell count, and matching cell measures
    within 3 * combined standard error (scaled by ``measure_tol_scale``).
    """
    r = as_rho(rho)
    if p.dim != q.dim:
        raise DomainError("partitions must share a dimension")
    if p.m != q.m:
        raise DomainError("partitions must have the same cell count")
    check_measure_match(p, q, scale=measure_tol_scale, seed=seed)
    if mode in ("auto", "quadrature"):
        exact = _bilinear_quadrature(p, q, r)
        if exact is not None:
            return exact
        if mode == "quadrature":
            raise DomainError("no quadrature route for this pair")

    def match(x, y):
        return (p.membership(x) == q.membership(y)).astype(float)

    return mc_mean(_correlated_values(match, r, p.dim), budget, seed=seed, threads=threads)


def check_measure_match(p: PartitionSpec, q: PartitionSpec, *, scale: float = 1.0,
                        budget: int = 400_000, seed=0) -> None:
    root = make_seedseq(seed).generate_state(1)[0]
    for k, (a, b) in enumerate(zip(p.cells, q.cells)):
        ma = gaussian_measure(a, budget, seed=[root, 1, k])
        mb = gaussian_measure(b, budget, seed=[root, 2, k])
        tol = scale * (3.0 * (ma.std_error + mb.std_error) + 1e-9)
        if abs(ma.value - mb.value) > tol:
            raise DomainError(
                f"cell {k} measures differ: {ma.value:.6f} vs {mb.value:.6f} (tol {tol:.2g})"
            )


def _bilinear_quadrature(p: PartitionSpec, q: PartitionSpec, rho: float) -> Estimate | None:
    if p.dim == 2:
        dp = [c.sector_decomposition() for c in p.cells]
        dq = [c.sector_decomposition() for c in q.cells]
        if all(d is not None and len(d[1]) == 1 for d in dp + dq):
            total = 0.0
            for (qa, arcs_a), (qb, arcs_b) in zip(dp, dq):
                (a0, a1), (b0, b1) = arcs_a[0], arcs_b[0]
                total += shifted_sector_pair_stability(qa, a0, a1, qb, b0, b1, rho)
            return Estimate(total, 1e-9 * p.m, 0, QUADRATURE)
    if p.m != 2:
        return None
    sp = [_halfspace_side(c) for c in p.cells]
    sq = [_halfspace_side(c) for c in q.cells]
    if any(s is None for s in sp + sq):
        return None
    # orient both partitions by their first cell: cell0 = {s*(n.x - a) <= 0}
    def oriented(side):
        n, a, le = side
        return (n, a) if le else (-n, -a)

    n1, a1 = oriented(sp[0])
    n2, a2 = oriented(sq[0])
    rc = rho * float(n1 @ n2)
    if abs(rc) >= 1.0:
        rc = math.copysign(1.0 - 1e-15, rc)
    inside = bivariate_normal_cdf(a1, a2, rc)
    val = inside + 1.0 - float(ndtr(a1)) - float(ndtr(a2)) + inside
    return Estimate(val, 2e-10, 0, QUADRATURE)


# ---------------------------------------------------------------------------
# the first-moment (propeller) functional


def cell_moment(s: SetSpec, budget: int = 400_000, *, seed=0, mode: str = "auto") -> VectorEstimate:
    """integral of x * gamma_d(x) over the cell."""
    exact = _cell_moment_exact(s) if mode in ("auto", "quadrature") else None
    if exact is not None:
        return VectorEstimate(exact, np.full(s.dim, 1e-12), 0, QUADRATURE)
    if mode == "quadrature":
        raise DomainError("no quadrature route for this cell's moment")
    sizes_seed = seed
    rngs = spawn_rngs(sizes_seed, 1)
    rng = rngs[0]
    x = rng.standard_normal((budget, s.dim))
    ind = s.contains(x).astype(float)
    vals = x * ind[:, None]
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(budget)
    return VectorEstimate(mean, se, budget, "monte-carlo")


def _cell_moment_exact(s: SetSpec) -> np.ndarray | None:
    side = _halfspace_side(s)
    if side is not None:
        n, a, le = side
        phi_a = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        return -n * phi_a if le else n * phi_a
    deco = s.sector_decomposition()
    if deco is not None:
        apex, arcs = deco
        return np.sum([shifted_sector_moment(apex, a, b) for a, b in arcs], axis=0)
    if isinstance(s, ProductWithR):
        inner = _cell_moment_exact(s.base)
        if inner is not None:
            return np.concatenate([inner, np.zeros(s.extra)])
    from .partitions import Complement, ExplicitCell

    if isinstance(s, ExplicitCell) and not s.halfspaces:
        return np.zeros(s.dim)  # odd symmetry of the moment over R^d
    if isinstance(s, Complement):
        inner = _cell_moment_exact(s.base)
        if inner is not None:
            return -inner
    return None


def propeller_functional(p: PartitionSpec, budget: int = 1_000_000, *, seed=0,
                         mode: str = "auto", n_batches: int = 32) -> Estimate:
    """sum_i || integral_{cell_i} x gamma(x) dx ||^2.

    Exact for half-spaces and planar sector-like cells.  In Monte Carlo mode
    one shared Gaussian stream feeds every cell's moment; the squared norms
    are estimated without plug-in bias by cross products of moments from
    independent batch pairs, with the standard error taken across pairs.
    """
    if mode in ("auto", "quadrature"):
        moments = [_cell_moment_exact(c) for c in p.cells]
        if all(m is not None for m in moments):
            val = float(sum(float(m @ m) for m in moments))
            return Estimate(val, 1e-10, 0, QUADRATURE)
        if mode == "quadrature":
            raise DomainError("no quadrature route for this partition's moments")
    n_batches += n_batches % 2
    rngs = spawn_rngs(seed, n_batches)
    per = max(budget // n_batches, 1)
    moments = np.zeros((n_batches, p.m, p.dim))
    for b, rng in enumerate(rngs):
        x = rng.standard_normal((per, p.dim))
        idx = p.membership(x)
        for i in range(p.m):
            moments[b, i] = x[idx == i].sum(axis=0) / per
    pair_vals = np.einsum("pid,pid->p", moments[0::2], moments[1::2])
    value = float(pair_vals.mean())
    se = float(pair_vals.std(ddof=1) / math.sqrt(len(pair_vals)))
    return Estimate(value, se, per * n_batches, "monte-carlo")


def half_space_stability_closed_form(measure: float, rho) -> float:
    """Noise stability of a half-space of the given Gaussian measure.

    This is the benchmark value maximizing noise stability at fixed measure:
    Phi2(a, a; rho) with a = Phi^{-1}(measure).  Deterministic to 1e-10.
    """
    r = as_rho(rho)
    if not 0.0 < measure < 1.0:
        raise DomainError("measure must lie strictly in (0, 1)")
    a = float(ndtri(measure))
    return bivariate_normal_cdf(a, a, r)


def sheppard_half_space(rho: float) -> float:
    """1/4 + arcsin(rho) / (2 pi): stability of the measure-1/2 half-space."""
    return 0.25 + math.asin(rho) / (2.0 * math.pi)
