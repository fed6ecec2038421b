"""Information-spectrum slicing, tail quantiles and general-source rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .sources import DensityDistribution, JointSource, SequenceSource, exact_sum_density_distribution


@dataclass(frozen=True)
class SpectrumPlan:
    """Partition of ``[lambda_min, lambda_max)`` into ``n_slices`` slices of width ``delta``.

    Slice ``i`` (1-based) is ``[lambda_min + (i-1) delta, lambda_min + i delta)``,
    truncated at ``lambda_max``.  Index 0 is the atypical region: values
    below ``lambda_min`` or at/above ``lambda_max``.
    """

    lambda_min: float
    lambda_max: float
    delta: float
    n_slices: int
    degenerate: bool = False
    density: str = "x_given_y"

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("slice width must be positive")
        if self.n_slices < 1:
            raise ValueError("a plan needs at least one slice")
        if self.lambda_max <= self.lambda_min:
            raise ValueError("lambda_max must exceed lambda_min")

    @classmethod
    def from_bounds(cls, lambda_min, lambda_max, delta=None, density="x_given_y") -> "SpectrumPlan":
        """Plan with ``N = ceil((lambda_max - lambda_min) / delta)``.

        ``delta=None`` uses the square-root rule ``sqrt(lambda_max - lambda_min)``.
        """
        width = lambda_max - lambda_min
        if width <= 0:
            raise ValueError("lambda_max must exceed lambda_min; use make_plan for point spectra")
        if delta is None:
            delta = math.sqrt(width)
        n = max(1, math.ceil(width / delta - 1e-12))
        return cls(float(lambda_min), float(lambda_max), float(delta), n, False, density)

    @property
    def boundaries(self) -> np.ndarray:
        """Left endpoints ``lambda_i`` of slices 1..N."""
        return self.lambda_min + self.delta * np.arange(self.n_slices)

    def as_row(self) -> dict:
        return {
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "delta": self.delta,
            "n_slices": self.n_slices,
        }


def slice_index(plan: SpectrumPlan, value: float) -> int:
    """Slice containing ``value``; 0 for the atypical region."""
    if not (plan.lambda_min <= value < plan.lambda_max):
        return 0
    i = int(math.floor((value - plan.lambda_min) / plan.delta)) + 1
    # guard against rounding just below a boundary
    if plan.lambda_min + (i - 1) * plan.delta > value:
        i -= 1
    elif i < plan.n_slices and plan.lambda_min + i * plan.delta <= value:
        i += 1
    return min(i, plan.n_slices)


def slice_indices(plan: SpectrumPlan, values) -> np.ndarray:
    """Vectorized :func:`slice_index`."""
    return np.array([slice_index(plan, float(v)) for v in np.ravel(values)], dtype=np.int64).reshape(np.shape(values))


def slice_probabilities(plan: SpectrumPlan, dist: DensityDistribution) -> np.ndarray:
    """``P(T_i)`` for ``i = 0..N`` under a density distribution."""
    out = np.zeros(plan.n_slices + 1)
    np.add.at(out, slice_indices(plan, dist.values), dist.probs)
    return out


def _support(density, pmf):
    if isinstance(density, DensityDistribution):
        return density.values, density.probs
    table = np.asarray(density, dtype=float)
    if pmf is None:
        mask = np.isfinite(table)
        return np.sort(table[mask]), None
    p = np.asarray(pmf, dtype=float)
    mask = p > 0
    vals, probs = table[mask], p[mask]
    order = np.argsort(vals)
    return vals[order], probs[order]


def _quantile(values, probs, q):
    c = np.cumsum(probs)
    k = int(np.searchsorted(c, q - 1e-15, side="left"))
    return float(values[min(k, len(values) - 1)])


def make_plan(density, pmf=None, *, policy="exact_support", delta="sqrt_width",
              integral_delta: bool = False, kind: str = "x_given_y") -> SpectrumPlan:
    """Build a slicing plan from a density's spectrum.

    Parameters
    ----------
    density : DensityDistribution or array_like
        Either an exact distribution of the density or a per-pair table
        (with ``pmf`` giving the weights; zero-probability pairs ignored).
    policy : ``"exact_support"`` or ``("quantile", delta_q)``
        Range ``[lambda_min, lambda_max]``: the support extremes, or the
        ``delta_q`` and ``1 - delta_q`` quantiles.
    delta : ``"sqrt_width"`` or float
        Slice width.  With ``integral_delta`` the square-root rule is
        rounded up to an integer number of bits.

    Notes
    -----
    The top of the range is closed: ``N = floor(width / delta) + 1`` and
    ``lambda_max`` is moved to ``lambda_min + N delta`` so that the largest
    value of the range falls in slice ``N`` rather than in the atypical
    region.  A point spectrum gives a one-slice plan flagged ``degenerate``.
    """
    vals, probs = _support(density, pmf)
    if len(vals) == 0:
        raise ValueError("density table has empty support")
    if policy == "exact_support":
        lo, hi = float(vals[0]), float(vals[-1])
    elif isinstance(policy, tuple) and policy[0] == "quantile":
        dq = float(policy[1])
        if probs is None:
            raise ValueError("quantile policy needs probabilities")
        lo, hi = _quantile(vals, probs, dq), _quantile(vals, probs, 1 - dq)
    else:
        raise ValueError(f"unknown range policy {policy!r}")
    width = hi - lo
    if width <= 1e-12:
        d = 1.0 if delta == "sqrt_width" else float(delta)
        return SpectrumPlan(lo, lo + d, d, 1, True, kind)
    if delta == "sqrt_width":
        d = math.sqrt(width)
        if integral_delta:
            d = float(max(1, math.ceil(d - 1e-12)))
    else:
        d = float(delta)
    n = int(math.floor(width / d + 1e-12)) + 1
    return SpectrumPlan(lo, lo + n * d, d, n, False, kind)


def tail_quantile(dist: DensityDistribution, epsilon: float) -> float:
    """Generalized inverse ``inf{gamma : P(h > gamma) <= epsilon}`` over the support."""
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    if dist.exact_probs is not None:
        eps = Fraction(epsilon).limit_denominator(10**12) if not isinstance(epsilon, Fraction) else epsilon
        tail = Fraction(0)
        tails = []
        for p in reversed(dist.exact_probs):
            tails.append(tail)
            tail += p
        tails.reverse()  # tails[k] = P(h > values[k])
        for k, t in enumerate(tails):
            if t <= eps:
                return float(dist.values[k])
    p = np.asarray(dist.probs)
    tails = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    k = int(np.argmax(tails <= epsilon + 1e-14))
    return float(dist.values[k])


def component_entropies(src: JointSource) -> dict:
    """Single-letter ``H(X|Y)``, ``H(Y|X)`` and their sum in bits."""
    s = src.support
    p = src.pmf[s]
    hx = float(np.dot(p, src.density_table("x_given_y")[s]))
    hy = float(np.dot(p, src.density_table("y_given_x")[s]))
    return {"x_given_y": hx, "y_given_x": hy, "sum": hx + hy}


@dataclass(frozen=True)
class GeneralRates:
    """Limit rates of a finite mixture of IID sources plus finite-n diagnostics.

    ``sum_rate`` is the sup sum conditional entropy rate (max over
    components of the per-component sum); ``sum_of_maxes`` adds the
    separate maxima of ``H(X|Y)`` and ``H(Y|X)``.
    """

    sum_rate: float
    x_given_y: float
    y_given_x: float
    sum_of_maxes: float
    diagnostics: dict = field(default_factory=dict)


def general_source_rates(src: SequenceSource, ns=(), epsilon: float = 0.01, max_atoms: int = 5_000_000) -> GeneralRates:
    """Closed-form mixture rates and ``(1/n) tail_quantile(epsilon)`` at each ``n`` in ``ns``."""
    comps = [component_entropies(s) for w, s in src.components if w > 0]
    hx = max(c["x_given_y"] for c in comps)
    hy = max(c["y_given_x"] for c in comps)
    diag = {}
    for n in ns:
        dist = exact_sum_density_distribution(src.with_n(n), "sum", max_atoms=max_atoms)
        diag[n] = tail_quantile(dist, epsilon) / n
    return GeneralRates(max(c["sum"] for c in comps), hx, hy, hx + hy, diag)
