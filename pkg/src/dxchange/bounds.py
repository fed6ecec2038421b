"""Numeric evaluators for converse and achievability bounds.

All logarithms are base 2.  Length bounds whose ``(x)_+`` argument
vanishes are reported as 0 with ``vacuous=True`` instead of ``-inf``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from .errors import KeyTooLong, NotAlmostUniform
from .hashing import HashChain, hash_index
from .sources import DensityDistribution, JointSource, PairDensityDistribution, SequenceSource, exact_pair_density_distribution
from .spectrum import SpectrumPlan

# --------------------------------------------------------------------------
# Gaussian helpers


def Q(a):
    """Standard normal upper tail ``P(Z > a)``."""
    return norm.sf(a)


def Q_inv(eps):
    """Inverse of :func:`Q`."""
    return norm.isf(eps)


@dataclass(frozen=True)
class BoundResult:
    """A length bound: ``value`` is clamped at 0, ``raw`` is the unclamped formula.

    ``vacuous`` marks a degenerate ``(x)_+`` term (``raw = -inf``).
    """

    value: float
    raw: float
    vacuous: bool
    gamma: float | None = None


def _log2_pos(x: float) -> float:
    return math.log2(x) if x > 0 else -math.inf


# --------------------------------------------------------------------------
# hypothesis testing


def beta_epsilon(P, Q_, eps: float) -> float:
    """Smallest ``Q[T]`` over randomized tests with ``P[T] >= 1 - eps``.

    Neyman-Pearson: accept atoms in increasing order of ``Q/P``; the
    boundary atom is accepted fractionally.
    """
    P = np.asarray(P, dtype=float)
    Qa = np.asarray(Q_, dtype=float)
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    need = 1.0 - eps
    pos = P > 0
    ratio = np.full(P.shape, np.inf)
    ratio[pos] = Qa[pos] / P[pos]
    order = np.argsort(ratio, kind="stable")
    got, cost = 0.0, 0.0
    for k in order:
        if not pos[k]:
            break
        if got + P[k] >= need:
            cost += Qa[k] * (need - got) / P[k]
            return float(cost)
        got += P[k]
        cost += Qa[k]
    return float(cost)


def beta_lp(P, Q_, eps: float) -> float:
    """Linear-program value of ``beta_eps`` over all randomized tests (oracle)."""
    P = np.asarray(P, dtype=float)
    Qa = np.asarray(Q_, dtype=float)
    res = optimize.linprog(Qa, A_ub=-P[None, :], b_ub=[-(1 - eps)], bounds=[(0, 1)] * len(P), method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.fun)


def beta_vertex(P, Q_, eps: float) -> float:
    """Brute force over LP vertices: tests with at most one fractional atom (oracle)."""
    P = np.asarray(P, dtype=float)
    Qa = np.asarray(Q_, dtype=float)
    k = len(P)
    need = 1 - eps
    best = math.inf
    for mask in itertools.product((0, 1), repeat=k):
        t = np.array(mask, dtype=float)
        base_p, base_q = float(P @ t), float(Qa @ t)
        if base_p >= need - 1e-15:
            best = min(best, base_q)
        for j in range(k):
            if mask[j] or P[j] <= 0:
                continue
            frac = (need - base_p) / P[j]
            if 0 <= frac <= 1:
                best = min(best, base_q + frac * Qa[j])
    return best


def beta_upper_bound(P, Q_, eps: float, lam: float) -> float:
    """Upper bound ``lam - log(P(log P/Q < lam) - eps)_+`` on ``-log beta_eps``; ``inf`` if vacuous."""
    P = np.asarray(P, dtype=float)
    Qa = np.asarray(Q_, dtype=float)
    pos = P > 0
    with np.errstate(divide="ignore"):
        llr = np.where(Qa[pos] > 0, np.log2(P[pos]) - np.log2(np.where(Qa[pos] > 0, Qa[pos], 1.0)), np.inf)
    inner = float(P[pos][llr < lam].sum()) - eps
    if inner <= 0:
        return math.inf
    return lam - math.log2(inner)


# --------------------------------------------------------------------------
# converses


def singleshot_converse(sum_dist: DensityDistribution, eps: float, eta: float, plan: SpectrumPlan,
                        p_t0: float, gamma: float | None = None) -> BoundResult:
    """Lower bound on the minimum data-exchange length.

    ``gamma + 3 log(P_gamma - eps - P(T_0) - 1/N)_+ + log(1 - 2 eta) - delta
    - 6 log N - 4 log(1/eta) - 1`` with ``P_gamma = P(h(X△Y) > gamma)``;
    ``plan`` slices the joint density ``h(XY)`` and ``p_t0`` is its
    atypical mass.  With ``gamma=None`` the bound is maximized over the
    support of ``sum_dist``.
    """
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    if not 0 < eta < 1 - eps:
        raise ValueError("need 0 < eta < 1 - eps")
    N = plan.n_slices
    const = math.log2(1 - 2 * eta) if eta < 0.5 else -math.inf
    const += -plan.delta - 6 * math.log2(N) - 4 * math.log2(1 / eta) - 1

    def at(g):
        return g + 3 * _log2_pos(sum_dist.tail(g) - eps - p_t0 - 1 / N) + const

    grid = [gamma] if gamma is not None else [float(v) for v in sum_dist.values]
    best_g, best = grid[0], -math.inf
    for g in grid:
        v = at(g)
        if v > best:
            best_g, best = g, v
    return BoundResult(max(best, 0.0), best, not math.isfinite(best), best_g)


def almost_uniform_converse(src: JointSource, eps: float, eta: float, margin: float,
                            gamma: float | None = None, QX=None, QY=None) -> BoundResult:
    """Lower bound for sources whose joint density spread is at most ``margin``.

    ``gamma + log(P(-log P^2/(Q_X Q_Y) >= gamma) - eps - 2 eta)_+ - margin
    - 4 log(1/eta) - 1``; ``Q_X, Q_Y`` default to the marginals, where the
    inner density equals ``h(x|y) + h(y|x)``.

    Raises
    ------
    NotAlmostUniform
        If the spread of ``-log P(x, y)`` over the support exceeds ``margin``.
    """
    s = src.support
    hj = src.density_table("joint")[s]
    spread = float(hj.max() - hj.min())
    if spread > margin + 1e-9:
        raise NotAlmostUniform(f"joint density spread {spread:.6g} exceeds margin {margin}")
    qx = src.px if QX is None else np.asarray(QX, dtype=float)
    qy = src.py if QY is None else np.asarray(QY, dtype=float)
    p = src.pmf[s]
    a, b = np.nonzero(s)
    dens = -2 * np.log2(p) + np.log2(qx[a]) + np.log2(qy[b])
    const = -margin - 4 * math.log2(1 / eta) - 1

    def at(g):
        return g + _log2_pos(float(p[dens >= g - 1e-12].sum()) - eps - 2 * eta) + const

    grid = [gamma] if gamma is not None else sorted(set(np.round(dens, 12)))
    best_g, best = grid[0], -math.inf
    for g in grid:
        v = at(g)
        if v > best:
            best_g, best = g, v
    return BoundResult(max(best, 0.0), best, not math.isfinite(best), best_g)


# --------------------------------------------------------------------------
# leftover hash


@dataclass(frozen=True)
class KeyExtraction:
    """Extracted key plus the exact distance from ideal and the leftover-hash bound.

    ``distance`` is the L1 distance between ``P_KZS`` and
    ``unif x P_ZS`` over the full linear family (``None`` if too large to
    enumerate).
    """

    key: int | None
    key_bits: int
    distance: float | None
    lemma_bound: float
    h_min: float


def min_entropy(pmf) -> float:
    p = np.asarray(pmf, dtype=float).ravel()
    return float(-math.log2(p.max()))


def extract_key(pmf, key_bits: int, transcript_bits: int | None = None, eta: float = 1.0,
                seed: int = 0, x: int | None = None, max_family: int = 2**20) -> KeyExtraction:
    """Hash the common observation into a ``key_bits``-bit key.

    Parameters
    ----------
    pmf : array_like
        Law of the common observation ``X`` (1-D), or a joint table of
        ``(X, Z)`` with ``Z`` the eavesdropped transcript.
    key_bits : int
        Requested key length ``log|K|``.
    transcript_bits : int, optional
        Transcript length ``l``; defaults to ``ceil(log2 |Z|)``.
    eta : float
        Slack in ``(0, 1]`` in ``key_bits <= H_min - l - 2 log(1/eta) - 1``.
    x : int, optional
        Realized index of ``X``; when given, the key ``f_seed(x)`` is returned.

    Raises
    ------
    KeyTooLong
        When ``key_bits`` violates the length condition.
    """
    table = np.asarray(pmf, dtype=float)
    if table.ndim == 1:
        table = table[:, None]
    nxv, nz = table.shape
    l = int(math.ceil(math.log2(nz))) if transcript_bits is None else int(transcript_bits)
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    hmin = min_entropy(table.sum(axis=1))
    if key_bits < 0:
        raise ValueError("key length must be nonnegative")
    if key_bits > 0 and key_bits > hmin - l - 2 * math.log2(1 / eta) - 1 + 1e-12:
        raise KeyTooLong(f"{key_bits} bits exceed H_min - l - 2log(1/eta) - 1 = {hmin - l - 2 * math.log2(1 / eta) - 1:.4g}")
    bound = math.sqrt(2**key_bits * 2**l * 2.0**-hmin)
    m = (nxv - 1).bit_length()
    key = None
    if x is not None and key_bits > 0:
        key = hash_index(HashChain(seed, m, (key_bits,)), int(x))
    elif x is not None:
        key = 0
    if key_bits == 0:
        return KeyExtraction(key, 0, 0.0, bound, hmin)
    n_mat = 2 ** (m * key_bits)
    if n_mat > max_family:
        return KeyExtraction(key, key_bits, None, bound, hmin)
    K = 2**key_bits
    xs = np.arange(nxv, dtype=np.uint64)
    pz = table.sum(axis=0)
    total = 0.0
    mask = np.uint64(2**m - 1)
    for mat in range(n_mat):
        kv = np.zeros(nxv, dtype=np.int64)
        for j in range(key_bits):
            row = np.uint64((mat >> (j * m)) & int(mask))
            kv = (kv << 1) | (np.bitwise_count(xs & row) & 1).astype(np.int64)
        pkz = np.zeros((K, nz))
        np.add.at(pkz, kv, table)
        total += float(np.abs(pkz / n_mat - pz[None, :] / (K * n_mat)).sum())
    return KeyExtraction(key, key_bits, total, bound, hmin)


# --------------------------------------------------------------------------
# simple (two one-way messages) protocols


def _simple_feasible(a, b, p, l1, l2, eps) -> bool:
    # feasible iff P(C >= c) <= eps + 2^(1-c) at every atom c > 0 of C = max(A - l1, B - l2)
    c = np.maximum(a - l1, b - l2)
    order = np.argsort(-c)
    cs, ps = c[order], np.cumsum(p[order])
    pos = cs > 0
    if not pos.any():
        return True
    # P(C >= c_j) includes ties: take the last index of each tie group
    tail = ps[np.searchsorted(-cs, -cs, side="right") - 1]
    return bool(np.all(tail[pos] <= eps + 2.0 ** (1 - cs[pos]) + 1e-12))


def simple_protocol_bound(src, eps: float, grid: int = 201, tol: float = 1e-9) -> float:
    """Lower bound on the length of simple protocols (two one-way messages).

    Minimizes ``l1 + l2`` subject to
    ``P(h(X|Y) > l1 + d or h(Y|X) > l2 + d) <= eps + 2 * 2^-d`` for all
    ``d > 0``, on the exact joint law of the two conditional densities.
    Lengths are restricted to ``l1, l2 >= 0``.
    """
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    pair = src if isinstance(src, PairDensityDistribution) else exact_pair_density_distribution(src)
    a, b, p = pair.values[:, 0], pair.values[:, 1], pair.probs
    slack = 2.0 - math.log2(1 - eps) + 1.0
    hi1, hi2 = float(a.max()) + 1.0, float(b.max()) + 1.0

    def l2_star(l1):
        if not _simple_feasible(a, b, p, l1, hi2, eps):
            return math.inf
        lo, hi = 0.0, hi2
        if _simple_feasible(a, b, p, l1, lo, eps):
            return lo
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _simple_feasible(a, b, p, l1, mid, eps):
                hi = mid
            else:
                lo = mid
        return hi

    lo1 = max(0.0, float(a.min()) - slack)
    xs = np.linspace(lo1, hi1, grid)
    vals = np.array([x + l2_star(x) for x in xs])
    best = float(vals.min())
    k = int(np.argmin(vals))
    step = xs[1] - xs[0] if len(xs) > 1 else 1.0
    for _ in range(4):
        xs = np.linspace(max(lo1, xs[k] - step), min(hi1, xs[k] + step), 41)
        vals = np.array([x + l2_star(x) for x in xs])
        k = int(np.argmin(vals))
        best = min(best, float(vals[k]))
        step = xs[1] - xs[0]
    # the optimum often sits on the l1 feasibility edge; locate it by bisection
    finite = np.isfinite([l2_star(x) for x in np.linspace(lo1, hi1, grid)])
    if finite.any() and not finite.all():
        j = int(np.argmax(finite))
        if j > 0:
            xg = np.linspace(lo1, hi1, grid)
            lo, hi = xg[j - 1], xg[j]
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if math.isfinite(l2_star(mid)):
                    hi = mid
                else:
                    lo = mid
            best = min(best, hi + l2_star(hi))
    return best


# --------------------------------------------------------------------------
# second order


@dataclass(frozen=True)
class SecondOrder:
    """``n H + sqrt(n V) Q_inv(eps)`` with a Berry-Esseen band ``[low, high]``."""

    value: float
    low: float
    high: float
    shift: float
    degenerate: bool = False


def second_order_length(H: float, V: float, T: float, n: int, eps: float) -> SecondOrder:
    """Second-order length and the band implied by Berry-Esseen.

    ``T`` is the absolute third central moment ``E|h - H|^3``; the band
    uses the shift ``6 T / (sqrt(n) V^1.5)``.  Sides whose shifted
    probability leaves ``(0, 1)`` are infinite.  ``V = 0`` returns ``nH``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if V <= 0:
        return SecondOrder(n * H, n * H, n * H, 0.0, True)
    s = math.sqrt(n * V)
    val = n * H + s * float(Q_inv(eps))
    shift = 6 * T / (math.sqrt(n) * V**1.5)
    lo = n * H + s * float(Q_inv(eps + shift)) if eps + shift < 1 else -math.inf
    hi = n * H + s * float(Q_inv(eps - shift)) if eps - shift > 0 else math.inf
    return SecondOrder(val, lo, hi, shift)


# --------------------------------------------------------------------------
# D_eps


def orthant_probability(V, r1: float, r2: float) -> float:
    """``P(Z1 <= r1, Z2 <= r2)`` for ``Z ~ N(0, V)`` with ``V`` nonsingular."""
    V = np.asarray(V, dtype=float)
    s1, s2 = math.sqrt(V[0, 0]), math.sqrt(V[1, 1])
    rho = V[0, 1] / (s1 * s2)
    c = math.sqrt(1 - rho * rho)
    u1 = r1 / s1
    if u1 < -8:
        return 0.0

    def f(z):
        return norm.pdf(z) * norm.cdf((r2 / s2 - rho * z) / c)

    val, _ = integrate.quad(f, -8.0, u1, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


def _singular_d(V, eps):
    s1 = math.sqrt(max(V[0, 0], 0.0))
    s2 = math.sqrt(max(V[1, 1], 0.0))
    if s1 == 0 and s2 == 0:
        return 0.0
    if V[0, 1] >= 0 or s1 == 0 or s2 == 0:
        return (s1 + s2) * float(Q_inv(eps))
    # Z = (s1 W, -s2 W): need Phi(u) + Phi(v) - 1 >= 1 - eps, minimize s1 u + s2 v
    vmin = float(norm.ppf(1 - eps)) + 1e-15

    def v_of(u):
        return float(norm.ppf(2 - eps - norm.cdf(u)))

    lo = vmin
    res = optimize.minimize_scalar(lambda u: s1 * u + s2 * v_of(u), bounds=(lo + 1e-12, lo + 12), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.fun)


def d_epsilon(V, eps: float) -> float:
    """``inf{r1 + r2 : P(Z1 <= r1, Z2 <= r2) >= 1 - eps}`` for ``Z ~ N(0, V)``.

    A singular ``V`` (``Z`` supported on a line) is solved in one dimension.
    """
    V = np.asarray(V, dtype=float)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not np.allclose(V, V.T) or np.linalg.eigvalsh(V).min() < -1e-12:
        raise ValueError("V must be symmetric positive semidefinite")
    det = V[0, 0] * V[1, 1] - V[0, 1] ** 2
    if det <= 1e-12 * max(V[0, 0] * V[1, 1], 1e-300):
        return _singular_d(V, eps)
    s1, s2 = math.sqrt(V[0, 0]), math.sqrt(V[1, 1])
    target = 1 - eps
    r1_min = s1 * float(norm.ppf(target))
    r2_min = s2 * float(norm.ppf(target))

    def r2_of(r1):
        f = lambda r2: orthant_probability(V, r1, r2) - target
        if f(r2_min) >= 0:  # cdf noise near the marginal limit
            return r2_min
        hi = r2_min + s2
        while f(hi) < 0:
            if hi > r2_min + 40 * s2:
                return math.inf
            hi += 2 * s2
        return optimize.brentq(f, r2_min, hi, xtol=1e-12)

    span = 12 * s1
    res = optimize.minimize_scalar(lambda r1: r1 + r2_of(r1), bounds=(r1_min + 1e-9 * s1, r1_min + span),
                                   method="bounded", options={"xatol": 1e-9})
    return float(res.fun)
