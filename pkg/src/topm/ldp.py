"""Large-deviations rate functions and optimal static sampling ratios.

For a top alternative i and a bottom alternative j sampled with ratios
(r_i, r_j), the misordering probability decays at rate

    G_ij(r_i, r_j) = inf_x  r_i L_i(x) + r_j L_j(x),

where L is the Fenchel-Legendre transform of the per-sample log-MGF.  The
optimal ratio vector maximizes min_{i top, j bottom} G_ij over the simplex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .bayes import check_m, rank_desc
from .errors import DomainError, GridTooLarge, NoConvergence, ZeroRatio

NORMAL = "normal"
EXPONENTIAL = "exponential"
BERNOULLI = "bernoulli"
MEAN_TOL = 1e-12


@dataclass(frozen=True)
class RateSpec:
    """Sampling distribution of one alternative."""

    family: str
    mu: Optional[float] = None
    var: Optional[float] = None
    rate: Optional[float] = None
    q: Optional[float] = None

    def __post_init__(self):
        if self.family == NORMAL:
            if self.mu is None or self.var is None or not self.var > 0:
                raise DomainError("normal spec needs mu and a positive var")
        elif self.family == EXPONENTIAL:
            if self.rate is None or not self.rate > 0:
                raise DomainError("exponential spec needs a positive rate")
        elif self.family == BERNOULLI:
            if self.q is None or not 0 < self.q < 1:
                raise DomainError("bernoulli spec needs q in (0, 1)")
        else:
            raise DomainError(f"unknown family {self.family!r}")

    @classmethod
    def normal(cls, mu: float, var: float) -> "RateSpec":
        return cls(NORMAL, mu=float(mu), var=float(var))

    @classmethod
    def exponential(cls, rate: float) -> "RateSpec":
        return cls(EXPONENTIAL, rate=float(rate))

    @classmethod
    def bernoulli(cls, q: float) -> "RateSpec":
        return cls(BERNOULLI, q=float(q))

    @property
    def mean(self) -> float:
        if self.family == NORMAL:
            return self.mu
        if self.family == EXPONENTIAL:
            return 1.0 / self.rate
        return self.q

    def lstar(self, x):
        """Fenchel-Legendre transform of the cumulant generating function."""
        x = np.asarray(x, dtype=float)
        if self.family == NORMAL:
            return (x - self.mu) ** 2 / (2.0 * self.var)
        if self.family == EXPONENTIAL:
            lx = self.rate * x
            return lx - 1.0 - np.log(lx)
        q = self.q
        return _xlogy(x, x / q) + _xlogy(1.0 - x, (1.0 - x) / (1.0 - q))

    def lstar_d1(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == NORMAL:
            return (x - self.mu) / self.var
        if self.family == EXPONENTIAL:
            return self.rate - 1.0 / x
        return _logit(x) - _logit(self.q)

    def lstar_d2(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == NORMAL:
            return np.full_like(x, 1.0 / self.var)
        if self.family == EXPONENTIAL:
            return 1.0 / (x * x)
        return 1.0 / x + 1.0 / (1.0 - x)


def _xlogy(x, y):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.log(y)
    return np.where(x == 0, 0.0, out)


def _logit(x):
    return np.log(x) - np.log1p(-x)


def _check_distinct(si: RateSpec, sj: RateSpec) -> None:
    if abs(si.mean - sj.mean) <= MEAN_TOL:
        raise DomainError("rate function needs distinct means")


def rate_normal(si: RateSpec, sj: RateSpec, ri: float, rj: float) -> float:
    if si.family != NORMAL or sj.family != NORMAL:
        raise DomainError("rate_normal needs two normal specs")
    if min(ri, rj) <= 0:
        return 0.0
    d = si.mu - sj.mu
    return d * d / (2.0 * (si.var / ri + sj.var / rj))


def infimum_point_normal(si: RateSpec, sj: RateSpec, ri: float, rj: float) -> float:
    if si.family != NORMAL or sj.family != NORMAL:
        raise DomainError("infimum_point_normal needs two normal specs")
    if ri <= 0 or rj <= 0:
        raise ZeroRatio("infimum point needs positive ratios")
    wi = ri / si.var
    wj = rj / sj.var
    return (wi * si.mu + wj * sj.mu) / (wi + wj)


def infimum_point(si: RateSpec, sj: RateSpec, ri: float, rj: float) -> float:
    """Closed-form minimizer of r_i L_i(x) + r_j L_j(x) for same-family pairs."""
    if ri <= 0 or rj <= 0:
        raise ZeroRatio("infimum point needs positive ratios")
    if si.family != sj.family:
        return _infimum_search(si, sj, ri, rj)
    if si.family == NORMAL:
        return infimum_point_normal(si, sj, ri, rj)
    if si.family == EXPONENTIAL:
        return (ri + rj) / (ri * si.rate + rj * sj.rate)
    z = (ri * _logit(si.q) + rj * _logit(sj.q)) / (ri + rj)
    return float(1.0 / (1.0 + math.exp(-z)))


def _infimum_search(si, sj, ri, rj) -> float:
    lo, hi = sorted((si.mean, sj.mean))

    def f(x):
        return float(ri * si.lstar_d1(x) + rj * sj.lstar_d1(x))

    flo, fhi = f(lo), f(hi)
    if flo >= 0:
        return lo
    if fhi <= 0:
        return hi
    return brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def rate_generic(si: RateSpec, sj: RateSpec, ri: float, rj: float) -> float:
    """G_ij by direct one-dimensional minimization between the two means."""
    _check_distinct(si, sj)
    if ri < 0 or rj < 0:
        raise DomainError("ratios must be nonnegative")
    if min(ri, rj) == 0:
        return 0.0
    x = _infimum_search(si, sj, ri, rj)
    return float(ri * si.lstar(x) + rj * sj.lstar(x))


def rate_closed_form(si: RateSpec, sj: RateSpec, ri: float, rj: float) -> float:
    """G_ij via the family's closed-form infimum point."""
    _check_distinct(si, sj)
    if min(ri, rj) <= 0:
        return 0.0
    if si.family == sj.family == NORMAL:
        return rate_normal(si, sj, ri, rj)
    if si.family == sj.family == BERNOULLI:
        a = ri / (ri + rj)
        b = rj / (ri + rj)
        inner = (1 - si.q) ** a * (1 - sj.q) ** b + si.q**a * sj.q**b
        return float(-(ri + rj) * math.log(inner))
    x = infimum_point(si, sj, ri, rj)
    return float(ri * si.lstar(x) + rj * sj.lstar(x))


def exponential_printed_expression(rate_i: float, rate_j: float, ri: float, rj: float) -> float:
    """The exponential-family rate expression in the form usually printed.

    It equals the negative of the true rate G_ij (which is nonnegative).
    """
    den = ri * rate_i + rj * rate_j
    return ri * math.log(rate_i * (ri + rj) / den) + rj * math.log(rate_j * (ri + rj) / den)


# ---------------------------------------------------------------- vectorized pair algebra


def _pair_terms(si: RateSpec, sj: RateSpec, ri, rj):
    """Rate, gradient and Hessian factor of G for one pair over arrays of ratios.

    Returns (G, dG/dri, dG/drj, u_i, u_j, D); the Hessian of G is
    -(1/D) u u^T with u = (L_i'(x*), L_j'(x*)) and D = ri L_i'' + rj L_j''.
    """
    ri = np.asarray(ri, dtype=float)
    rj = np.asarray(rj, dtype=float)
    fam = si.family if si.family == sj.family else None
    if fam == NORMAL:
        wi, wj = ri / si.var, rj / sj.var
        x = (wi * si.mu + wj * sj.mu) / (wi + wj)
    elif fam == EXPONENTIAL:
        x = (ri + rj) / (ri * si.rate + rj * sj.rate)
    elif fam == BERNOULLI:
        z = (ri * _logit(si.q) + rj * _logit(sj.q)) / (ri + rj)
        x = 1.0 / (1.0 + np.exp(-z))
    else:
        x = np.vectorize(lambda a, b: _infimum_search(si, sj, a, b))(ri, rj)
    li, lj = si.lstar(x), sj.lstar(x)
    ui, uj = si.lstar_d1(x), sj.lstar_d1(x)
    D = ri * si.lstar_d2(x) + rj * sj.lstar_d2(x)
    G = ri * li + rj * lj
    return G, li, lj, ui, uj, D


def _pair_rates(si: RateSpec, sj: RateSpec, ri, rj):
    ri = np.asarray(ri, dtype=float)
    rj = np.asarray(rj, dtype=float)
    pos = (ri > 0) & (rj > 0)
    out = np.zeros(np.broadcast(ri, rj).shape)
    if np.any(pos):
        rib = np.broadcast_to(ri, out.shape)[pos]
        rjb = np.broadcast_to(rj, out.shape)[pos]
        if si.family == sj.family == NORMAL:
            d = si.mu - sj.mu
            out[pos] = d * d / (2.0 * (si.var / rib + sj.var / rjb))
        else:
            out[pos] = _pair_terms(si, sj, rib, rjb)[0]
    return out


def _split(specs, m):
    k = len(specs)
    check_m(m, k)
    order = rank_desc([s.mean for s in specs])
    top, bot = order[:m], order[m:]
    for i in top:
        for j in bot:
            _check_distinct(specs[i], specs[j])
    return top, bot


@dataclass(frozen=True)
class PfsRate:
    rate: float
    argmin_pair: tuple


def pfs_rate(specs: Sequence[RateSpec], m: int, r) -> PfsRate:
    """Decay rate of the false-selection probability at ratio vector r."""
    r = np.asarray(r, dtype=float)
    if r.shape != (len(specs),):
        raise DomainError("ratio vector length must equal the number of specs")
    top, bot = _split(specs, m)
    best, pair = math.inf, None
    for i in top:
        for j in bot:
            g = float(_pair_rates(specs[i], specs[j], r[i], r[j]))
            if g < best:
                best, pair = g, (int(i), int(j))
    return PfsRate(best, pair)


def pair_rate_matrix(specs, m, r) -> np.ndarray:
    """G values with rows = top alternatives, columns = bottom, both by decreasing mean."""
    r = np.asarray(r, dtype=float)
    top, bot = _split(specs, m)
    return np.array([[float(_pair_rates(specs[i], specs[j], r[i], r[j])) for j in bot] for i in top])


# ---------------------------------------------------------------- grid oracle


@lru_cache(maxsize=32)
def _compositions(n: int, k: int) -> np.ndarray:
    if k == 1:
        return np.array([[n]], dtype=np.int32)
    parts = []
    for first in range(n + 1):
        rest = _compositions(n - first, k - 1)
        parts.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int32), rest]))
    return np.vstack(parts)


def grid_size(k: int, n: int) -> int:
    return math.comb(n + k - 1, k - 1)


def solve_ratios_grid(specs, m, grid_step: float = 0.005, max_points: int = 5_000_000) -> np.ndarray:
    """Exhaustive search of the simplex lattice with spacing ``grid_step``."""
    k = len(specs)
    n = int(round(1.0 / grid_step))
    if abs(n * grid_step - 1.0) > 1e-9:
        raise DomainError("grid_step must divide 1")
    if grid_size(k, n) > max_points:
        raise GridTooLarge(f"lattice has {grid_size(k, n)} points (limit {max_points})")
    top, bot = _split(specs, m)
    pts = _compositions(n, k).astype(float) / n
    val = np.full(pts.shape[0], np.inf)
    for i in top:
        for j in bot:
            np.minimum(val, _pair_rates(specs[i], specs[j], pts[:, i], pts[:, j]), out=val)
    return pts[int(np.argmax(val))].copy()


# ---------------------------------------------------------------- optimal ratios


@dataclass(frozen=True)
class OptimalRatioResult:
    r_star: np.ndarray
    z_star: float
    balance_residual: Optional[float]
    optrate_residual: float
    pair_rates: np.ndarray
    iterations: int


@dataclass(frozen=True)
class Residuals:
    optrate_residual: float
    balance_residual: Optional[float]


def ratio_condition_residuals(specs, m, r) -> Residuals:
    """Distance from the optimality conditions at r.

    The rate condition asks every top row-minimum and every bottom
    column-minimum of G to coincide; the balance condition (normal only)
    asks sum_top r^2/var == sum_bottom r^2/var.
    """
    r = np.asarray(r, dtype=float)
    G = pair_rate_matrix(specs, m, r)
    mins = np.concatenate([G.min(axis=1), G.min(axis=0)])
    opt = float(mins.max() - mins.min())
    bal = None
    if all(s.family == NORMAL for s in specs):
        top, bot = _split(specs, m)
        w = np.array([r[i] ** 2 / specs[i].var for i in range(len(specs))])
        bal = float(abs(w[top].sum() - w[bot].sum()))
    return Residuals(opt, bal)


def _barrier_parts(specs, pairs, rho, mu):
    k = len(specs)
    val = float(rho.sum())
    grad = np.ones(k)
    hess = np.zeros((k, k))
    for i, j in pairs:
        G, li, lj, ui, uj, D = _pair_terms(specs[i], specs[j], rho[i], rho[j])
        g = float(G) - 1.0
        if not g > 0:
            return math.inf, None, None
        val -= mu * math.log(g)
        v = np.array([float(li), float(lj)])
        u = np.array([float(ui), float(uj)])
        idx = np.array([i, j])
        grad[idx] -= mu * v / g
        hess[np.ix_(idx, idx)] += mu * (np.outer(v, v) / (g * g) + np.outer(u, u) / (g * float(D)))
    return val, grad, hess


def solve_ratios(specs, m, tol: float = 1e-10, max_iter: int = 2000) -> OptimalRatioResult:
    """Maximize min_{top i, bottom j} G_ij(r_i, r_j) over the simplex.

    Because G is positively homogeneous of degree one, the problem is
    equivalent to minimizing sum(rho) subject to G_ij(rho_i, rho_j) >= 1;
    the optimum ratio is rho/sum(rho) and the optimal rate is 1/sum(rho).
    The convex program is solved by a log-barrier Newton method.
    """
    k = len(specs)
    top, bot = _split(specs, m)
    pairs = [(int(i), int(j)) for i in top for j in bot]
    base = min(float(_pair_rates(specs[i], specs[j], 1.0, 1.0)) for i, j in pairs)
    rho = np.full(k, 2.0 / base)
    mu = rho.sum() / len(pairs)
    it = 0
    while True:
        for _ in range(200):
            it += 1
            if it > max_iter:
                raise NoConvergence(f"barrier Newton did not converge in {max_iter} iterations")
            val, grad, hess = _barrier_parts(specs, pairs, rho, mu)
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = float(-grad @ step)
            if dec / 2.0 <= 1e-14 * max(1.0, abs(val)):
                break
            s = 1.0
            while True:
                cand = rho + s * step
                if np.all(cand > 0):
                    cval = _barrier_parts(specs, pairs, cand, mu)[0]
                    if cval <= val - 0.25 * s * dec:
                        break
                s *= 0.5
                if s < 1e-20:
                    break
            if s < 1e-20:
                break
            rho = cand
        if mu * len(pairs) <= tol * rho.sum():
            break
        mu *= 0.1
    r = rho / rho.sum()
    G = pair_rate_matrix(specs, m, r)
    res = ratio_condition_residuals(specs, m, r)
    return OptimalRatioResult(r, float(G.min()), res.balance_residual, res.optrate_residual, G, it)


def solve_ratios_normal(specs, m, tol: float = 1e-10, max_iter: int = 2000) -> OptimalRatioResult:
    if any(s.family != NORMAL for s in specs):
        raise DomainError("solve_ratios_normal needs normal specs")
    return solve_ratios(specs, m, tol, max_iter)


def normal_specs(means, variances) -> list:
    return [RateSpec.normal(a, b) for a, b in zip(means, variances)]
