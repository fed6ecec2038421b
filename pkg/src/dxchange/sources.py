"""Finite joint sources, their IID / mixture extensions, and entropy densities.

All information quantities are in bits (base-2 logarithms).  A
:class:`JointSource` holds a single-letter pmf ``P_XY`` either as exact
rationals (when built from ``Fraction``/``int``/``str`` entries) or as
doubles.  A :class:`SequenceSource` extends it to blocks of length ``n``,
optionally as a finite mixture of IID laws: one component is drawn per
block, then ``n`` IID pairs from it.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, DistributionTooLarge, ZeroProbability

KINDS = ("joint", "x_given_y", "y_given_x", "sum")

# exact rational probabilities are only carried for modest enumerations
EXACT_ATOM_CAP = 20_000
EXACT_N_CAP = 400


def _exact_entry(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return Fraction(int(v))
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse probability {v!r}") from exc
    return None


class JointSource:
    """Finite-alphabet joint distribution of a pair ``(X, Y)``.

    Parameters
    ----------
    table : array_like, shape (|X|, |Y|)
        Joint probabilities.  If every entry is a ``Fraction``, ``int`` or a
        string such as ``"1/3"`` the source is kept in exact-rational mode
        and must sum to exactly one; otherwise doubles are used and the sum
        must be one within ``1e-12``.
    """

    def __init__(self, table):
        rows = [list(r) for r in (table.tolist() if isinstance(table, np.ndarray) else table)]
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("pmf must be a non-empty rectangular table")
        exact = None
        if not isinstance(table, np.ndarray):
            conv = [[_exact_entry(v) for v in r] for r in rows]
            if all(v is not None for r in conv for v in r):
                exact = tuple(tuple(r) for r in conv)
        if exact is not None:
            if any(v < 0 for r in exact for v in r):
                raise ValueError("pmf entries must be nonnegative")
            if sum(v for r in exact for v in r) != 1:
                raise ValueError("exact pmf must sum to 1")
            pmf = np.array([[float(v) for v in r] for r in exact], dtype=float)
        else:
            pmf = np.array(rows, dtype=float)
            if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
                raise ValueError("pmf entries must be finite and nonnegative")
            if abs(pmf.sum() - 1.0) > 1e-12:
                raise ValueError(f"pmf sums to {pmf.sum()!r}, not 1")
        pmf.setflags(write=False)
        self.pmf = pmf
        self.exact = exact

    @classmethod
    def z_channel(cls) -> "JointSource":
        """The binary Z-channel with mass 1/3 on (0,0), (1,0) and (1,1)."""
        t = Fraction(1, 3)
        return cls([[t, Fraction(0)], [t, t]])

    @property
    def alphabet_x(self) -> int:
        return self.pmf.shape[0]

    @property
    def alphabet_y(self) -> int:
        return self.pmf.shape[1]

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    @cached_property
    def px(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @cached_property
    def py(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    @cached_property
    def support(self) -> np.ndarray:
        return self.pmf > 0

    def exact_table(self):
        """Exact rational table; doubles are converted losslessly."""
        if self.exact is not None:
            return self.exact
        return tuple(tuple(Fraction(float(v)) for v in r) for r in self.pmf)

    def exact_conditionals(self):
        """Return exact ``(P(x|y), P(y|x))`` tables (zero off the support)."""
        t = self.exact_table()
        nx, ny = self.alphabet_x, self.alphabet_y
        col = [sum(t[a][b] for a in range(nx)) for b in range(ny)]
        row = [sum(t[a][b] for b in range(ny)) for a in range(nx)]
        pxy = tuple(tuple(t[a][b] / col[b] if t[a][b] else Fraction(0) for b in range(ny)) for a in range(nx))
        pyx = tuple(tuple(t[a][b] / row[a] if t[a][b] else Fraction(0) for b in range(ny)) for a in range(nx))
        return pxy, pyx

    @cached_property
    def _tables(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            joint = np.where(self.support, -np.log2(self.pmf), np.inf)
            hy = np.where(self.py > 0, -np.log2(self.py), np.inf)
            hx = np.where(self.px > 0, -np.log2(self.px), np.inf)
            x_given_y = np.where(self.support, joint - hy[None, :], np.inf)
            y_given_x = np.where(self.support, joint - hx[:, None], np.inf)
        out = {
            "joint": joint,
            "x_given_y": x_given_y,
            "y_given_x": y_given_x,
            "sum": x_given_y + y_given_x,
        }
        for v in out.values():
            v.setflags(write=False)
        return out

    def density_table(self, kind: str) -> np.ndarray:
        """Per-pair density table in bits, ``inf`` outside the support."""
        if kind not in KINDS:
            raise ValueError(f"unknown density kind {kind!r}")
        return self._tables[kind]

    def level_keys(self, kind: str) -> dict:
        """Map each support pair to a hashable key identifying its density level.

        Exact sources key by the rational probability whose ``-log2`` is the
        density, so equal levels are detected without float comparison.
        """
        nx, ny = self.alphabet_x, self.alphabet_y
        if self.exact is not None:
            t = self.exact
            pxy, pyx = self.exact_conditionals()
            exact_of = {
                "joint": lambda a, b: t[a][b],
                "x_given_y": lambda a, b: pxy[a][b],
                "y_given_x": lambda a, b: pyx[a][b],
                "sum": lambda a, b: pxy[a][b] * pyx[a][b],
            }[kind]
            return {(a, b): exact_of(a, b) for a in range(nx) for b in range(ny) if t[a][b] > 0}
        tab = self.density_table(kind)
        return {(a, b): round(float(tab[a, b]), 12) for a in range(nx) for b in range(ny) if self.pmf[a, b] > 0}

    def transpose(self) -> "JointSource":
        """Swap the roles of X and Y."""
        if self.exact is not None:
            return JointSource([list(c) for c in zip(*self.exact)])
        return JointSource(self.pmf.T.copy())

    def product(self, n: int) -> "JointSource":
        """The n-fold product law as a single source on ``X^n x Y^n``.

        Sequences are indexed in mixed radix, most significant symbol first.
        """
        if self.exact is not None:
            t = [list(r) for r in self.exact]
            out = [[Fraction(1)]]
            for _ in range(n):
                out = [[out[i][j] * t[a][b] for j in range(len(out[0])) for b in range(len(t[0]))]
                       for i in range(len(out)) for a in range(len(t))]
            return JointSource(out)
        out = np.ones((1, 1))
        for _ in range(n):
            out = np.kron(out, self.pmf)
        return JointSource(out / out.sum())

    def __repr__(self):
        mode = "exact" if self.exact is not None else "float"
        return f"JointSource({self.alphabet_x}x{self.alphabet_y}, {mode})"


def entropy_density(src: JointSource, x: int, y: int, kind: str = "joint") -> float:
    """Entropy density of a single pair in bits.

    ``kind`` is one of ``joint`` (``-log P(x,y)``), ``x_given_y``,
    ``y_given_x`` or ``sum`` (``h(x|y) + h(y|x)``).

    Raises
    ------
    ZeroProbability
        If ``P(x, y) = 0``.
    """
    if src.pmf[x, y] <= 0:
        raise ZeroProbability(f"P({x},{y}) = 0")
    return float(src.density_table(kind)[x, y])


@dataclass(frozen=True)
class DensityStats:
    """Moments of the sum conditional entropy density ``h(X△Y)``.

    ``abs_third_moment`` is ``E|h - H|^3`` (the Berry-Esseen constant);
    ``third_central_moment`` is the signed ``E(h - H)^3``.
    """

    mean: float
    variance: float
    third_central_moment: float
    abs_third_moment: float
    tables: dict


def density_stats(src: JointSource) -> DensityStats:
    s = src.support
    p = src.pmf[s]
    h = src.density_table("sum")[s]
    mean = float(np.dot(p, h))
    dev = h - mean
    return DensityStats(
        mean=mean,
        variance=float(np.dot(p, dev**2)),
        third_central_moment=float(np.dot(p, dev**3)),
        abs_third_moment=float(np.dot(p, np.abs(dev) ** 3)),
        tables={k: src.density_table(k) for k in KINDS},
    )


def covariance_matrix(src: JointSource) -> np.ndarray:
    """Covariance of ``(h(X|Y), h(Y|X))`` under the pmf, in bits^2."""
    s = src.support
    p = src.pmf[s]
    a = src.density_table("x_given_y")[s]
    b = src.density_table("y_given_x")[s]
    ma, mb = np.dot(p, a), np.dot(p, b)
    da, db = a - ma, b - mb
    cab = float(np.dot(p, da * db))
    return np.array([[float(np.dot(p, da * da)), cab], [cab, float(np.dot(p, db * db))]])


@dataclass(frozen=True)
class SequenceSource:
    """Block source of length ``n``: IID, or a finite mixture of IID laws."""

    components: tuple
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("block length must be >= 1")
        if not self.components:
            raise ValueError("at least one component is required")
        nx = {c.alphabet_x for _, c in self.components}
        ny = {c.alphabet_y for _, c in self.components}
        if len(nx) != 1 or len(ny) != 1:
            raise ValueError("mixture components must share alphabets")
        w = [wt for wt, _ in self.components]
        if any(float(v) < 0 for v in w):
            raise ValueError("mixture weights must be nonnegative")
        total = sum(w)
        if (isinstance(total, Fraction) and total != 1) or abs(float(total) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")

    @classmethod
    def iid(cls, src: JointSource, n: int) -> "SequenceSource":
        return cls(((Fraction(1), src),), n)

    @classmethod
    def mixture(cls, parts, n: int) -> "SequenceSource":
        parts = tuple((_exact_entry(w) if _exact_entry(w) is not None else float(w), s) for w, s in parts)
        return cls(parts, n)

    def with_n(self, n: int) -> "SequenceSource":
        return SequenceSource(self.components, n)

    @property
    def alphabet_x(self) -> int:
        return self.components[0][1].alphabet_x

    @property
    def alphabet_y(self) -> int:
        return self.components[0][1].alphabet_y

    @property
    def weights(self) -> np.ndarray:
        return np.array([float(w) for w, _ in self.components])

    @property
    def sources(self) -> list:
        return [s for _, s in self.components]

    @property
    def is_iid(self) -> bool:
        return sum(1 for w, _ in self.components if w > 0) == 1

    @property
    def is_exact(self) -> bool:
        return all(isinstance(w, Fraction) and s.is_exact for w, s in self.components)

    def _mix_log2(self, per_component):
        # per_component: list of arrays of log2 probabilities, one per component
        acc = None
        for (w, _), lp in zip(self.components, per_component):
            if w <= 0:
                continue
            term = lp + math.log2(float(w))
            acc = term if acc is None else np.logaddexp2(acc, term)
        return acc

    def log2_prob(self, xs, ys) -> np.ndarray:
        """``log2 P(x^n, y^n)`` for row-stacked sequences (``-inf`` off support)."""
        xs, ys = np.atleast_2d(xs), np.atleast_2d(ys)
        with np.errstate(divide="ignore"):
            return self._mix_log2([np.log2(s.pmf)[xs, ys].sum(axis=-1) for s in self.sources])

    def log2_prob_x(self, xs) -> np.ndarray:
        xs = np.atleast_2d(xs)
        with np.errstate(divide="ignore"):
            return self._mix_log2([np.log2(s.px)[xs].sum(axis=-1) for s in self.sources])

    def log2_prob_y(self, ys) -> np.ndarray:
        ys = np.atleast_2d(ys)
        with np.errstate(divide="ignore"):
            return self._mix_log2([np.log2(s.py)[ys].sum(axis=-1) for s in self.sources])

    def sequence_density(self, xs, ys, kind: str = "sum") -> np.ndarray:
        """Entropy density of whole blocks under the (mixture) block law."""
        joint = -self.log2_prob(xs, ys)
        if kind == "joint":
            return joint
        with np.errstate(invalid="ignore"):
            hx = joint + self.log2_prob_y(ys)
            hy = joint + self.log2_prob_x(xs)
        if kind == "x_given_y":
            return hx
        if kind == "y_given_x":
            return hy
        if kind == "sum":
            return hx + hy
        raise ValueError(f"unknown density kind {kind!r}")


def sample(src: SequenceSource, rng: np.random.Generator):
    """Draw one block ``(x^n, y^n)`` as integer arrays.

    Deterministic given the state of ``rng`` (numpy's PCG64 stream is
    platform independent).  Mixtures draw one component per block.
    """
    w = src.weights
    k = 0 if len(w) == 1 else int(rng.choice(len(w), p=w / w.sum()))
    comp = src.components[k][1]
    flat = comp.pmf.ravel()
    idx = rng.choice(flat.size, size=src.n, p=flat / flat.sum())
    return idx // comp.alphabet_y, idx % comp.alphabet_y


# --------------------------------------------------------------------------
# exact n-fold distributions of additive densities


@dataclass(frozen=True)
class DensityDistribution:
    """Finite distribution of a density value, sorted by value."""

    values: np.ndarray
    probs: np.ndarray
    exact_probs: tuple | None = None

    def __len__(self):
        return len(self.values)

    def tail(self, gamma: float, inclusive: bool = False) -> float:
        """``P(h > gamma)`` (or ``P(h >= gamma)`` when ``inclusive``)."""
        side = "left" if inclusive else "right"
        k = np.searchsorted(self.values, gamma, side=side)
        return float(self.probs[k:].sum())

    def tail_exact(self, gamma: float, inclusive: bool = False):
        if self.exact_probs is None:
            return None
        side = "left" if inclusive else "right"
        k = int(np.searchsorted(self.values, gamma, side=side))
        return sum(self.exact_probs[k:], Fraction(0))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def as_dict(self) -> dict:
        ps = self.exact_probs if self.exact_probs is not None else self.probs
        return {float(v): p for v, p in zip(self.values, ps)}


@dataclass(frozen=True)
class PairDensityDistribution:
    """Joint distribution of ``(h(X^n|Y^n), h(Y^n|X^n))`` as atoms."""

    values: np.ndarray  # shape (K, 2)
    probs: np.ndarray


def _compositions(n: int, L: int) -> np.ndarray:
    """All length-L nonnegative integer vectors summing to n."""
    if L == 1:
        return np.array([[n]], dtype=np.int64)
    if L == 2:
        k = np.arange(n + 1, dtype=np.int64)
        return np.column_stack([k, n - k])
    blocks = []
    for c in range(n + 1):
        rest = _compositions(n - c, L - 1)
        blocks.append(np.column_stack([np.full(len(rest), c, dtype=np.int64), rest]))
    return np.vstack(blocks)


def _levels(src: JointSource, kinds):
    """Group support pairs into density levels.

    Returns ``(values, probs, exact_probs)`` with ``values`` of shape
    ``(L, len(kinds))``.
    """
    keyed = [src.level_keys(k) for k in kinds]
    groups: dict = {}
    for pair in keyed[0]:
        key = tuple(kd[pair] for kd in keyed)
        groups.setdefault(key, []).append(pair)
    tabs = [src.density_table(k) for k in kinds]
    exact = src.exact
    vals, probs, eprobs = [], [], []
    for pairs in groups.values():
        a, b = pairs[0]
        vals.append([float(t[a, b]) for t in tabs])
        probs.append(float(sum(src.pmf[p] for p in pairs)))
        eprobs.append(sum((exact[p[0]][p[1]] for p in pairs), Fraction(0)) if exact is not None else None)
    return np.array(vals), np.array(probs), eprobs


def _component_atoms(src: JointSource, n: int, kinds, max_atoms: int, want_exact: bool):
    vals, probs, eprobs = _levels(src, kinds)
    L = len(probs)
    count = math.comb(n + L - 1, L - 1)
    if count > max_atoms:
        raise DistributionTooLarge(
            f"{count} distinct level multisets exceed the cap of {max_atoms}; use Monte Carlo"
        )
    comp = _compositions(n, L)
    values = comp @ vals
    logp = gammaln(n + 1) - gammaln(comp + 1).sum(axis=1) + comp @ np.log(probs)
    p = np.exp(logp)
    exact = None
    if want_exact and eprobs[0] is not None and count <= EXACT_ATOM_CAP and n <= EXACT_N_CAP:
        fn = math.factorial(n)
        facts = [math.factorial(i) for i in range(n + 1)]
        exact = []
        for row in comp:
            m = fn
            pr = Fraction(1)
            for k, q in zip(row, eprobs):
                m //= facts[k]
                if k:
                    pr *= q ** int(k)
            exact.append(m * pr)
    return values, p, exact


def _merge_sorted(values, probs, exact):
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    if exact is not None:
        exact = [exact[i] for i in order]
    keep_v, keep_p, keep_e = [], [], []
    for i, v in enumerate(values):
        if keep_v and abs(v - keep_v[-1]) <= 1e-9 * max(1.0, abs(v)):
            keep_p[-1] += probs[i]
            if exact is not None:
                keep_e[-1] += exact[i]
        else:
            keep_v.append(float(v))
            keep_p.append(float(probs[i]))
            if exact is not None:
                keep_e.append(exact[i])
    if exact is not None:
        keep_p = [float(e) for e in keep_e]
    return DensityDistribution(np.array(keep_v), np.array(keep_p), tuple(keep_e) if exact is not None else None)


def exact_sum_density_distribution(src, kind: str = "sum", max_atoms: int = 5_000_000) -> DensityDistribution:
    """Exact law of ``sum_i h(X_i, Y_i)`` over a block, by multinomial convolution.

    Atoms are keyed by the multiset of per-symbol density levels, so no
    floating-point equality is needed to build them; coincident values are
    merged afterwards.  Mixtures return the weighted mixture of component
    laws.  Exact rational probabilities are attached when the source is
    exact and the enumeration is small.

    Parameters
    ----------
    src : SequenceSource or JointSource
        A bare ``JointSource`` is treated as ``n = 1``.
    kind : str
        Which additive density to sum (see :data:`KINDS`).
    max_atoms : int
        Cap on the number of level multisets per component.

    Raises
    ------
    DistributionTooLarge
        When the number of level multisets exceeds ``max_atoms``.
    """
    if isinstance(src, JointSource):
        src = SequenceSource.iid(src, 1)
    want_exact = src.is_exact
    all_v, all_p, all_e = [], [], []
    for w, comp in src.components:
        if w <= 0:
            continue
        v, p, e = _component_atoms(comp, src.n, (kind,), max_atoms, want_exact)
        all_v.append(v[:, 0])
        all_p.append(p * float(w))
        if e is None:
            want_exact = False
        elif want_exact:
            all_e.extend(q * w for q in e)
    values = np.concatenate(all_v)
    probs = np.concatenate(all_p)
    return _merge_sorted(values, probs, all_e if want_exact else None)


def exact_pair_density_distribution(src, max_atoms: int = 5_000_000) -> PairDensityDistribution:
    """Exact joint law of ``(h(X^n|Y^n), h(Y^n|X^n))`` for an IID block."""
    if isinstance(src, JointSource):
        src = SequenceSource.iid(src, 1)
    if not src.is_iid:
        raise ValueError("pair density distribution is defined for IID blocks only")
    (w, comp), = [(w, c) for w, c in src.components if w > 0]
    v, p, _ = _component_atoms(comp, src.n, ("x_given_y", "y_given_x"), max_atoms, False)
    return PairDensityDistribution(v, p)


# --------------------------------------------------------------------------
# source description files

_KEY_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def _parse_component(fields: dict, line: int, key_lines=None) -> JointSource:
    at = lambda k: (key_lines or {}).get(k, line)
    try:
        nx = int(fields["alphabet_x"])
        ny = int(fields["alphabet_y"])
        raw = fields["pmf"]
    except KeyError as exc:
        raise ConfigError("missing key", line=line, field=exc.args[0]) from None
    except ValueError:
        raise ConfigError("alphabet sizes must be integers", line=at("alphabet_x")) from None
    line = at("pmf")
    tokens = [t for t in re.split(r"[\s,]+", raw) if t]
    if len(tokens) != nx * ny:
        raise ConfigError(f"expected {nx * ny} pmf entries, got {len(tokens)}", line=line, field="pmf")
    try:
        vals = [Fraction(t) for t in tokens]
    except (ValueError, ZeroDivisionError):
        raise ConfigError("pmf entries must be rationals like 1/3 or decimals", line=line, field="pmf") from None
    try:
        return JointSource([vals[i * ny:(i + 1) * ny] for i in range(nx)])
    except ValueError as exc:
        raise ConfigError(str(exc), line=line, field="pmf") from None


def parse_source(text: str, n: int = 1) -> SequenceSource:
    """Parse a source description (format described in the README)."""
    top: dict = {}
    blocks: list = []
    current = top
    start_line = {id(top): 1}
    key_lines: dict = {id(top): {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[mixture]":
            current = {}
            blocks.append(current)
            start_line[id(current)] = lineno
            key_lines[id(current)] = {}
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise ConfigError(f"cannot parse {raw.strip()!r}", line=lineno)
        key, value = m.groups()
        if key not in ("alphabet_x", "alphabet_y", "pmf", "weight"):
            raise ConfigError("unknown key", line=lineno, field=key)
        if key in current:
            raise ConfigError("duplicate key", line=lineno, field=key)
        current[key] = value
        key_lines[id(current)][key] = lineno
    if not blocks:
        if "weight" in top:
            raise ConfigError("weight is only valid inside [mixture] blocks", field="weight")
        return SequenceSource.iid(_parse_component(top, 1, key_lines[id(top)]), n)
    parts = []
    for b in blocks:
        merged = {k: v for k, v in top.items() if k != "pmf"}
        merged.update(b)
        if "weight" not in merged:
            raise ConfigError("mixture block needs a weight", line=start_line[id(b)], field="weight")
        try:
            w = Fraction(merged["weight"])
        except (ValueError, ZeroDivisionError):
            raise ConfigError("bad weight", line=start_line[id(b)], field="weight") from None
        lines = {**key_lines[id(top)], **key_lines[id(b)]}
        parts.append((w, _parse_component(merged, start_line[id(b)], lines)))
    try:
        return SequenceSource.mixture(parts, n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def read_source(path, n: int = 1) -> SequenceSource:
    return parse_source(Path(path).read_text(), n)


def format_source(src: SequenceSource) -> str:
    """Serialize a source back to the description format."""

    def body(js: JointSource) -> list:
        t = js.exact_table()
        pmf = " ".join(str(v) for r in t for v in r)
        return [f"alphabet_x = {js.alphabet_x}", f"alphabet_y = {js.alphabet_y}", f"pmf = {pmf}"]

    if len(src.components) == 1:
        return "\n".join(body(src.components[0][1])) + "\n"
    out = []
    for w, js in src.components:
        wf = w if isinstance(w, Fraction) else Fraction(float(w))
        out += ["[mixture]", f"weight = {wf}"] + body(js)
    return "\n".join(out) + "\n"


def enumerate_density_distribution(src: SequenceSource, kind: str = "sum", max_pairs: int = 2**22) -> DensityDistribution:
    """Density law by brute force over every block pair (small ``n`` only).

    Works for mixtures too, with the density taken under the mixture block
    law rather than per component.
    """
    nx, ny, n = src.alphabet_x, src.alphabet_y, src.n
    total = (nx * ny) ** n
    if total > max_pairs:
        raise DistributionTooLarge(f"{total} block pairs exceed the cap of {max_pairs}")
    idx = np.arange(total, dtype=np.int64)
    pairs = np.empty((total, n), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        idx, pairs[:, i] = np.divmod(idx, nx * ny)
    xs, ys = pairs // ny, pairs % ny
    lp = src.log2_prob(xs, ys)
    keep = np.isfinite(lp)
    vals = src.sequence_density(xs[keep], ys[keep], kind)
    return _merge_sorted(vals, np.exp2(lp[keep]), None)
