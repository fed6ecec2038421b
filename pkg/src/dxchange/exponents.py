"""Random-coding and sphere-packing exponents for data exchange.

Exponents are in bits.  Optimization runs over joint distributions ``Q``
supported on ``supp(P)`` (any other ``Q`` has infinite divergence): a
dense simplex grid locates the basin, then a local solver refines it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .sources import JointSource, _compositions

MAX_GRID_POINTS = 1_000_000


def _grid_steps(k: int, resolution: float, max_points: int) -> int:
    M = max(1, int(round(1 / resolution)))
    while M > 1 and math.comb(M + k - 1, k - 1) > max_points:
        M = int(M * 0.9)
    return M


class ExponentEvaluator:
    """Divergence and conditional entropies of ``Q`` against a fixed ``P``.

    Parameters
    ----------
    src : JointSource
        The true law ``P``.
    resolution : float
        Simplex grid step; coarsened automatically so that the grid has
        at most ``max_points`` points.
    """

    def __init__(self, src: JointSource, resolution: float = 1e-3, max_points: int = MAX_GRID_POINTS):
        self.src = src
        self.pos = np.argwhere(src.support)
        self.k = len(self.pos)
        self.logp = np.log2(src.pmf[src.support])
        self.steps = _grid_steps(self.k, resolution, max_points)
        self._grid = None

    # functionals on batches of support-restricted distributions q, shape (G, k)
    def functionals(self, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        G = len(q)
        T = np.zeros((G,) + self.src.pmf.shape)
        T[:, self.pos[:, 0], self.pos[:, 1]] = q
        col = T.sum(axis=1, keepdims=True)
        row = T.sum(axis=2, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            hx = np.where(T > 0, T * np.log2(np.where(T > 0, col / T, 1.0)), 0.0).sum(axis=(1, 2))
            hy = np.where(T > 0, T * np.log2(np.where(T > 0, row / T, 1.0)), 0.0).sum(axis=(1, 2))
            d = np.where(q > 0, q * (np.log2(np.where(q > 0, q, 1.0)) - self.logp), 0.0).sum(axis=1)
        return d, hx, hy

    @property
    def grid(self):
        if self._grid is None:
            q = _compositions(self.steps, self.k) / self.steps
            self._grid = (q,) + self.functionals(q)
        return self._grid

    def _h(self, q, kind):
        _, hx, hy = self.functionals(q)
        return {"x_given_y": hx, "y_given_x": hy, "sum": hx + hy}[kind][0]

    def _grid_h(self, kind):
        _, _, hx, hy = self.grid
        return {"x_given_y": hx, "y_given_x": hy, "sum": hx + hy}[kind]

    def max_entropy(self, kind: str):
        """Largest value of the chosen conditional entropy over ``Q``."""
        q, *_ = self.grid
        h = self._grid_h(kind)
        j = int(np.argmax(h))
        res = optimize.minimize(lambda v: -self._h(_simplex(v), kind), q[j], method="SLSQP",
                                bounds=[(0, 1)] * self.k,
                                constraints=[{"type": "eq", "fun": lambda v: v.sum() - 1}],
                                options={"ftol": 1e-15, "maxiter": 500})
        return max(float(h[j]), -float(res.fun)), q[j]

    def min_divergence(self, kind: str, R: float):
        """``inf {D(Q||P) : H_kind(Q) > R}`` and its minimizer; ``inf`` when empty."""
        q, d, hx, hy = self.grid
        p = np.exp2(self.logp)
        if self._h(p, kind) > R:
            return 0.0, p
        hmax, qmax = self.max_entropy(kind)
        if hmax <= R + 1e-12:
            return math.inf, None
        h = self._grid_h(kind)
        feas = h > R
        if feas.any():
            j = int(np.flatnonzero(feas)[np.argmin(d[feas])])
            start = q[j]
        else:
            start = qmax
        res = optimize.minimize(
            lambda v: self.functionals(_simplex(v))[0][0], start, method="SLSQP",
            bounds=[(0, 1)] * self.k,
            constraints=[{"type": "eq", "fun": lambda v: v.sum() - 1},
                         {"type": "ineq", "fun": lambda v: self._h(_simplex(v), kind) - R}],
            options={"ftol": 1e-15, "maxiter": 1000},
        )
        best, arg = (float(d[j]), q[j]) if feas.any() else (math.inf, None)
        v = _simplex(res.x)
        if self._h(v, kind) >= R - 1e-10:
            dv = float(self.functionals(v)[0][0])
            if dv < best:
                best, arg = dv, v
        return best, arg

    def e_sp(self, R: float):
        v, q = self.min_divergence("sum", R)
        return max(v, 0.0), q

    def e_r(self, R: float):
        """``min_Q D(Q||P) + |R - H(Q△)|^+`` and its minimizer."""
        q, d, hx, hy = self.grid
        obj = d + np.maximum(R - (hx + hy), 0.0)
        j = int(np.argmin(obj))
        best, arg = float(obj[j]), q[j]

        def f(z):
            v = _softmax(z)
            dv, a, b = self.functionals(v)
            return float(dv[0] + max(R - a[0] - b[0], 0.0))

        z0 = np.log(np.maximum(q[j], 1e-12))
        res = optimize.minimize(f, z0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        if res.fun < best:
            best, arg = float(res.fun), _softmax(res.x)
        # the sphere-packing minimizer is a feasible point of the same objective
        sp, qs = self.e_sp(R)
        if qs is not None:
            cand = f(np.log(np.maximum(qs, 1e-300)))
            if cand < best:
                best, arg = cand, qs
        return max(best, 0.0), arg

    def e_sp_simple(self, R: float, tol: float = 1e-10):
        """``max over R1 + R2 = R`` of ``min(f_x(R1), f_y(R2))``; returns (value, R1)."""
        fx = lambda r1: self.min_divergence("x_given_y", r1)[0]
        fy = lambda r2: self.min_divergence("y_given_x", r2)[0]
        if fx(0.0) >= fy(R):
            return fy(R), 0.0
        if fy(0.0) >= fx(R):
            return fx(R), R
        lo, hi = 0.0, R
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if fx(mid) < fy(R - mid):
                lo = mid
            else:
                hi = mid
        v_lo = min(fx(lo), fy(R - lo))
        v_hi = min(fx(hi), fy(R - hi))
        return (max(v_lo, 0.0), lo) if v_lo >= v_hi else (max(v_hi, 0.0), hi)


def _simplex(v):
    v = np.clip(np.asarray(v, dtype=float), 0.0, None)
    return v / v.sum()


def _softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


_CACHE: dict = {}


def _evaluator(src: JointSource, resolution: float) -> ExponentEvaluator:
    key = (src.pmf.tobytes(), src.pmf.shape, resolution)
    if key not in _CACHE:
        _CACHE[key] = ExponentEvaluator(src, resolution)
    return _CACHE[key]


def exponent_Er(src: JointSource, R: float, resolution: float = 1e-3) -> float:
    return _evaluator(src, resolution).e_r(R)[0]


def exponent_Esp(src: JointSource, R: float, resolution: float = 1e-3) -> float:
    """Sphere-packing exponent; ``inf`` when no ``Q`` has ``H(Q△) > R``."""
    return _evaluator(src, resolution).e_sp(R)[0]


def exponent_Esp_simple(src: JointSource, R: float, resolution: float = 1e-3) -> float:
    return _evaluator(src, resolution).e_sp_simple(R)[0]


@dataclass
class ExponentReport:
    R: float
    E_r: float
    E_sp: float
    E_sp_simple: float
    q_r: np.ndarray | None = field(default=None, repr=False)
    q_sp: np.ndarray | None = field(default=None, repr=False)
    r1_split: float | None = None

    def as_row(self) -> dict:
        fmt = lambda q: "" if q is None else " ".join(repr(float(v)) for v in q)
        return {"R": self.R, "E_r": self.E_r, "E_sp": self.E_sp, "E_sp_simple": self.E_sp_simple,
                "q_r": fmt(self.q_r), "q_sp": fmt(self.q_sp),
                "r1_split": "" if self.r1_split is None else self.r1_split}


def exponent_report(src: JointSource, R: float, resolution: float = 1e-3) -> ExponentReport:
    ev = _evaluator(src, resolution)
    er, qr = ev.e_r(R)
    esp, qsp = ev.e_sp(R)
    ess, r1 = ev.e_sp_simple(R)
    return ExponentReport(R, er, esp, ess, qr, qsp, r1)


def exponent_sweep(src: JointSource, rates, resolution: float = 1e-3) -> list:
    return [exponent_report(src, float(R), resolution) for R in rates]


# --------------------------------------------------------------------------
# Z-channel symmetric reduction


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def kappa(u: float, v: float) -> float:
    """``H(X|Y) + H(Y|X)`` for ``Q(0,0)=u, Q(1,0)=1-u-v, Q(1,1)=v``."""
    return (1 - v) * binary_entropy(u / (1 - v)) + (1 - u) * binary_entropy(v / (1 - u))


def zchannel_divergence(u: float, v: float) -> float:
    """``D(Q||P)`` for the Z-channel law with mass 1/3 on its three support points."""
    w = 1 - u - v
    h = -sum(t * math.log2(t) for t in (u, w, v) if t > 0)
    return math.log2(3) - h


def esp_symmetric_zchannel(R: float):
    """Sphere-packing exponent of the Z-channel along ``u = v = z``.

    Returns ``(E_sp, z*)``; ``(0, 1/3)`` below ``4/3`` and ``(inf, None)``
    above the peak of ``kappa(z, z)``.
    """
    if R < 4 / 3:
        return 0.0, 1 / 3
    k = lambda z: kappa(z, z)
    res = optimize.minimize_scalar(lambda z: -k(z), bounds=(1e-9, 0.5 - 1e-9), method="bounded",
                                   options={"xatol": 1e-12})
    zpk, kmax = float(res.x), -float(res.fun)
    if R >= kmax:
        return math.inf, None
    z = optimize.brentq(lambda t: k(t) - R, zpk, 1 / 3, xtol=1e-15)
    return zchannel_divergence(z, z), z
