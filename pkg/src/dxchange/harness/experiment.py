"""Build protocols from a configuration, run trials and emit CSV."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field

from ..bounds import second_order_length, simple_protocol_bound, singleshot_converse
from ..errors import ConfigError
from ..protocols import (
    BaselineSW,
    DataExchange,
    InteractiveSW,
    InteractiveSwParams,
    theorem2_budget,
)
from ..session import SessionRandomness, run_trial, source_rng
from ..sources import (
    SequenceSource,
    density_stats,
    enumerate_density_distribution,
    exact_pair_density_distribution,
    exact_sum_density_distribution,
    format_source,
    read_source,
    sample,
)
from ..spectrum import make_plan, slice_probabilities, tail_quantile
from ..typescheme import PhiSchedule, TypeProtocol
from . import wire
from .config import ExperimentConfig

TRIAL_COLUMNS = ["trial", "correct", "bits_total", "bits_phase1", "bits_phase2", "rounds",
                 "stop_slice", "error_kind"]
PARAM_COLUMNS = ["lambda_min", "lambda_max", "delta", "n_slices", "eta", "l", "l_max"]
SUMMARY_COLUMNS = ["error_rate", "error_sigma"]
# singleshot converse slack values tried; the best (largest) bound is kept
CONVERSE_ETAS = (0.01, 0.02, 0.05, 0.1, 0.2)


def density_distribution(src: SequenceSource, kind: str):
    """Exact law of a block density: convolution for IID, enumeration for mixtures."""
    if src.is_iid:
        return exact_sum_density_distribution(src, kind)
    return enumerate_density_distribution(src, kind)


@dataclass
class BuiltExperiment:
    """A configured protocol with its parameters and requested bound values."""

    config: ExperimentConfig
    src: SequenceSource
    protocol: object
    budget: int | None
    params: dict
    bounds: dict = field(default_factory=dict)

    def handshake_fields(self, trial: int, public_seed: int | None = None) -> dict:
        mb = lambda v: None if v is None or v == "" else int(round(float(v) * 1000))
        p, c = self.params, self.config
        out = {
            "version": wire.VERSION,
            "protocol": c.protocol,
            "n": self.src.n,
            "alphabet_x": self.src.alphabet_x,
            "alphabet_y": self.src.alphabet_y,
            "lambda_min_mb": mb(p["lambda_min"]),
            "lambda_max_mb": mb(p["lambda_max"]),
            "delta_mb": mb(p["delta"]),
            "eta_mb": mb(p["eta"]),
            "l": p["l"] if p["l"] != "" else None,
            "l_max": self.budget,
            "rate_mb": mb(c.rate),
            "type_delta_mb": mb(c.type_delta),
            "verify": c.verify_hashes,
            "source_digest": hashlib.sha256(format_source(self.src).encode()).hexdigest()[:32],
            "trial": trial,
        }
        if public_seed is not None:
            out["public_seed"] = public_seed
        return out


def _sw_params(config: ExperimentConfig, src: SequenceSource):
    dist = density_distribution(src, "x_given_y")
    plan = make_plan(dist, policy=config.range_spec(), delta=config.delta_spec(), integral_delta=True)
    try:
        if config.l is not None:
            params = InteractiveSwParams(plan, config.eta, config.l)
        else:
            params = InteractiveSwParams.from_plan(plan, config.eta)
    except ValueError as exc:
        raise ConfigError(str(exc), field="delta" if "slice" in str(exc) else "l") from None
    return params, float(slice_probabilities(plan, dist)[0])


def build_protocol(config: ExperimentConfig, src: SequenceSource | None = None) -> BuiltExperiment:
    """Resolve every policy in ``config`` into a runnable protocol."""
    if src is None:
        src = read_source(config.source, config.n)
    blank = {k: "" for k in PARAM_COLUMNS}
    budget = None
    t2 = None
    if config.protocol == "baseline_sw":
        l = config.l
        if l is None:
            lam = tail_quantile(density_distribution(src, "x_given_y"), config.epsilon)
            l = int(math.ceil(lam + config.eta - 1e-12))
        try:
            proto = BaselineSW(src, l, config.eta)
        except ValueError as exc:
            raise ConfigError(str(exc), field="l") from None
        params = {**blank, "eta": config.eta, "l": l}
    elif config.protocol in ("interactive_sw", "data_exchange"):
        sw, p_t0 = _sw_params(config, src)
        params = {**blank, **sw.as_row()}
        params = {k: params[k] for k in PARAM_COLUMNS}
        if config.protocol == "interactive_sw":
            proto = InteractiveSW(src, sw)
        else:
            t2 = theorem2_budget(density_distribution(src, "sum"), config.epsilon, sw.plan, sw.eta, p_t0)
            budget = config.l_max if config.l_max is not None else t2.l_max
            if budget < sw.l:
                raise ConfigError("l_max must cover the first message", field="l_max")
            proto = DataExchange(src, sw)
            proto.l_max = budget
            params["l_max"] = budget
    else:
        try:
            proto = TypeProtocol(src, PhiSchedule(config.rate, config.type_delta), verify=config.verify_hashes)
        except ValueError as exc:
            raise ConfigError(str(exc), field="rate") from None
        params = {**blank, "delta": proto.block}
        budget = config.l_max
        params["l_max"] = "" if budget is None else budget
    built = BuiltExperiment(config, src, proto, budget, params)
    built.bounds = compute_bounds(config, src, built, t2)
    return built


def compute_bounds(config: ExperimentConfig, src: SequenceSource, built=None, t2=None) -> dict:
    """Values of the bound columns requested in ``config.bounds``."""
    out: dict = {}
    eps = config.epsilon
    for name in config.bounds:
        if name == "theorem2_budget":
            if t2 is None:
                sw, p_t0 = _sw_params(config, src)
                t2 = theorem2_budget(density_distribution(src, "sum"), eps, sw.plan, sw.eta, p_t0)
            out["theorem2_budget"] = t2.l_max
            out["theorem2_error_bound"] = float(t2.bound)
        elif name == "singleshot_converse":
            joint = density_distribution(src, "joint")
            plan = make_plan(joint, policy=config.range_spec(), delta=config.delta_spec(), kind="joint")
            p_t0 = float(slice_probabilities(plan, joint)[0])
            sum_dist = density_distribution(src, "sum")
            best = -math.inf
            for e in CONVERSE_ETAS:
                if e < 1 - eps:
                    best = max(best, singleshot_converse(sum_dist, eps, e, plan, p_t0).raw)
            out["singleshot_converse"] = best
        elif name == "simple_bound":
            if not src.is_iid:
                raise ConfigError("simple_bound needs an i.i.d. source", field="bounds")
            out["simple_bound"] = simple_protocol_bound(exact_pair_density_distribution(src), eps)
        elif name == "second_order":
            if not src.is_iid:
                raise ConfigError("second_order needs an i.i.d. source", field="bounds")
            st = density_stats(src.sources[0])
            out["second_order"] = second_order_length(st.mean, st.variance, st.abs_third_moment, src.n, eps).value
    return out


# --------------------------------------------------------------------------
# rows and CSV


def outcome_row(trial, outcome, built: BuiltExperiment) -> dict:
    return {
        "trial": trial,
        "correct": int(outcome.correct),
        "bits_total": outcome.total_bits,
        "bits_phase1": outcome.bits_phase1,
        "bits_phase2": outcome.bits_phase2,
        "rounds": outcome.rounds_used,
        "stop_slice": "" if outcome.stop_round is None else outcome.stop_round,
        "error_kind": outcome.error_kind.value,
        **built.params,
        **built.bounds,
        **{k: "" for k in SUMMARY_COLUMNS},
    }


def summary_row(rows: list, built: BuiltExperiment) -> dict:
    k = len(rows)
    mean = lambda col: sum(float(r[col]) for r in rows) / k
    err = 1.0 - mean("correct")
    return {
        "trial": "summary",
        "correct": mean("correct"),
        "bits_total": mean("bits_total"),
        "bits_phase1": mean("bits_phase1"),
        "bits_phase2": mean("bits_phase2"),
        "rounds": mean("rounds"),
        "stop_slice": "",
        "error_kind": "",
        **built.params,
        **built.bounds,
        "error_rate": err,
        "error_sigma": math.sqrt(err * (1 - err) / k),
    }


def columns(built: BuiltExperiment) -> list:
    return TRIAL_COLUMNS + PARAM_COLUMNS + list(built.bounds) + SUMMARY_COLUMNS


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "dtype"):
        return _fmt(v.item())
    return str(v)


def write_csv(rows: list, cols: list, fh=None) -> str:
    """Write rows with full round-trip precision; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


@dataclass
class ExperimentResult:
    rows: list
    columns: list
    outcomes: list
    transcripts: list

    def csv(self) -> str:
        return write_csv(self.rows, self.columns)


def run_experiment(config: ExperimentConfig, built: BuiltExperiment | None = None, sock=None) -> ExperimentResult:
    """Run ``config.trials`` trials; one row per trial plus a summary row.

    In peer modes ``sock`` may be an already connected socket; otherwise
    one is opened from ``host``/``port``.
    """
    if built is None:
        built = build_protocol(config)
    outcomes, transcripts = [], []
    if config.mode == "simulate":
        for t in range(config.trials):
            _, _, out, tr = run_trial(built.protocol, built.src, config.seed, t, built.budget)
            outcomes.append(out)
            transcripts.append(tr)
    else:
        own = sock is None
        if own:
            sock = _open(config)
        try:
            stream = wire.FrameStream(sock)
            for t in range(config.trials):
                out, tr = peer_trial(built, stream, t)
                outcomes.append(out)
                transcripts.append(tr)
        finally:
            if own:
                sock.close()
    rows = [outcome_row(t, o, built) for t, o in enumerate(outcomes)]
    if rows:
        rows.append(summary_row(rows, built))
    return ExperimentResult(rows, columns(built), outcomes, transcripts)


def _open(config: ExperimentConfig):
    if config.mode == "peer-listen":
        srv = wire.listen(config.host, config.port)
        try:
            conn, _ = srv.accept()
        finally:
            srv.close()
        return conn
    return wire.connect(config.host, config.port)


def peer_trial(built: BuiltExperiment, stream, trial: int):
    """One session over ``stream``; the role follows ``config.mode``.

    Each peer draws the correlated pair from the shared master seed and
    keeps only its own half, which reproduces simulate mode exactly.
    """
    cfg = built.config
    role = 1 if cfg.mode == "peer-listen" else 2
    rnd = SessionRandomness.derive(cfg.seed, trial)
    if role == 1:
        wire.listener_handshake(stream, built.handshake_fields(trial, rnd.public_seed))
        public = rnd.public_seed
    else:
        public = wire.connector_handshake(stream, built.handshake_fields(trial))["public_seed"]
    x, y = sample(built.src, source_rng(cfg.seed, trial))
    party = rnd.for_party(role)
    party = type(party)(public, party.private_seed)
    return wire.run_party(stream, role, built.protocol, x if role == 1 else y, party, built.budget)


def peer_session(config: ExperimentConfig, sock, trial: int = 0, built: BuiltExperiment | None = None):
    """Run a single trial over a connected socket; returns ``(ExchangeOutcome, Transcript)``."""
    if built is None:
        built = build_protocol(config)
    return peer_trial(built, wire.FrameStream(sock), trial)
