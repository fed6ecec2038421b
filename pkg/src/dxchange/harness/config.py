"""Experiment configuration: flat ``key = value`` text with an include line.

Example::

    # Z-channel data exchange
    include zchannel.src
    protocol = data_exchange
    n = 8
    epsilon = 0.1
    eta = 6
    trials = 1000
    seed = 20240101
    bounds = theorem2_budget, second_order

``include <path>`` (or ``source = <path>``) names the source description;
relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError

PROTOCOLS = ("baseline_sw", "interactive_sw", "data_exchange", "type_protocol")
MODES = ("simulate", "peer-listen", "peer-connect")
BOUND_NAMES = ("theorem2_budget", "singleshot_converse", "simple_bound", "second_order")


@dataclass(frozen=True)
class ExperimentConfig:
    source: str
    seed: int
    protocol: str = "data_exchange"
    n: int = 8
    epsilon: float = 0.1
    eta: float = 6.0
    delta: str = "sqrt_width"
    range_policy: str = "exact_support"
    trials: int = 100
    mode: str = "simulate"
    host: str = "127.0.0.1"
    port: int = 0
    bounds: tuple = ()
    l: int | None = None
    l_max: int | None = None
    rate: float | None = None
    type_delta: float = 0.5
    verify_hashes: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}", field="protocol")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", field="mode")
        if self.n < 1:
            raise ConfigError("n must be >= 1", field="n")
        if self.trials < 0:
            raise ConfigError("trials must be >= 0", field="trials")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)", field="epsilon")
        for b in self.bounds:
            if b not in BOUND_NAMES:
                raise ConfigError(f"unknown bound {b!r}", field="bounds")
        if self.delta != "sqrt_width":
            try:
                if float(self.delta) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError("delta must be 'sqrt_width' or a positive number", field="delta") from None
        self.range_spec()
        if self.protocol == "type_protocol" and self.rate is None:
            raise ConfigError("type_protocol needs a rate", field="rate")

    def range_spec(self):
        """Range policy as accepted by :func:`dxchange.spectrum.make_plan`."""
        if self.range_policy == "exact_support":
            return "exact_support"
        m = re.fullmatch(r"quantile(?::|\()\s*([0-9.eE+-]+)\)?", self.range_policy)
        if not m:
            raise ConfigError("range_policy must be exact_support or quantile:<delta>", field="range_policy")
        return ("quantile", float(m.group(1)))

    def delta_spec(self):
        return "sqrt_width" if self.delta == "sqrt_width" else float(self.delta)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


_CASTS = {
    "seed": int, "n": int, "trials": int, "port": int, "l": int, "l_max": int,
    "epsilon": float, "eta": float, "rate": float, "type_delta": float,
}


def _cast(key: str, value: str, line: int):
    if key == "bounds":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if key == "verify_hashes":
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError("expected a boolean", line=line, field=key)
    if key in _CASTS:
        try:
            return _CASTS[key](value)
        except ValueError:
            raise ConfigError(f"expected {_CASTS[key].__name__}", line=line, field=key) from None
    return value


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    """Parse configuration text; errors carry line and field information."""
    known = {f.name for f in fields(ExperimentConfig)}
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"include\s+(\S+)", line)
        if m:
            key, value = "source", m.group(1)
        else:
            m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)", line)
            if not m:
                raise ConfigError(f"cannot parse {raw.strip()!r}", line=lineno)
            key, value = m.group(1), m.group(2).strip()
        if key not in known:
            raise ConfigError("unknown key", line=lineno, field=key)
        if key in values:
            raise ConfigError("duplicate key", line=lineno, field=key)
        if key == "source":
            p = Path(value)
            value = str(p if p.is_absolute() else Path(base_dir) / p)
        values[key] = _cast(key, value, lineno)
        lines[key] = lineno
    for req in ("source", "seed"):
        if req not in values:
            raise ConfigError("required key missing", field=req)
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        if exc.field in lines:
            raise ConfigError(str(exc).split("] ", 1)[-1], line=lines[exc.field], field=exc.field) from None
        raise


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    return parse_config(p.read_text(), p.parent)
