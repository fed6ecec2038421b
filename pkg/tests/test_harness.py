import csv
import io
import socket
import threading
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import DEMOS
from dxchange.errors import ConfigError, ConnectionLost, HandshakeMismatch, WireFormatError
from dxchange.harness import build_protocol, load_config, parse_config, peer_session, run_experiment
from dxchange.harness import wire
from dxchange.harness.cli import main
from dxchange.harness.config import ExperimentConfig
from dxchange.session import Kind, Message

BASE = f"""
include {DEMOS / 'zchannel.src'}
protocol = data_exchange
n = 8
epsilon = 0.1
eta = 6
seed = 42
"""


def cfg(extra="", **over):
    return parse_config(BASE + extra).with_overrides(**over)


# -------------------------------------------------------------- config


def test_include_resolves_relative(tmp_path):
    (tmp_path / "z.src").write_text((DEMOS / "zchannel.src").read_text())
    (tmp_path / "run.cfg").write_text("include z.src\nseed = 1\ntrials = 3\n")
    c = load_config(tmp_path / "run.cfg")
    assert c.source == str(tmp_path / "z.src")
    assert c.trials == 3 and c.protocol == "data_exchange"


@pytest.mark.parametrize("text, line, field", [
    ("include a.src\nseed = x\n", 2, "seed"),
    ("include a.src\nseed = 1\ncolour = red\n", 3, "colour"),
    ("include a.src\nseed = 1\nseed = 2\n", 3, "seed"),
    ("include a.src\nseed = 1\nprotocol = magic\n", 3, "protocol"),
    ("include a.src\nseed = 1\nrange_policy = widest\n", 3, "range_policy"),
    ("include a.src\nseed = 1\nbounds = theorem2_budget, nope\n", 3, "bounds"),
    ("include a.src\nseed = 1\njust words\n", 3, None),
])
def test_config_errors_locate(text, line, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert exc.value.field == field


def test_seed_mandatory():
    with pytest.raises(ConfigError) as exc:
        parse_config("include a.src\n")
    assert exc.value.field == "seed"


def test_range_policies():
    assert cfg().range_spec() == "exact_support"
    assert cfg("range_policy = quantile:0.01\n").range_spec() == ("quantile", 0.01)
    assert cfg("delta = 2\n").delta_spec() == 2.0
    with pytest.raises(ConfigError):
        ExperimentConfig(source="a", seed=1, protocol="type_protocol")


# -------------------------------------------------------------- experiment


def test_zero_trials_header_only():
    res = run_experiment(cfg(trials=0))
    lines = res.csv().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("trial,correct,bits_total,bits_phase1,bits_phase2,rounds,stop_slice,error_kind")


def test_csv_deterministic_and_complete():
    c = cfg("bounds = theorem2_budget, second_order\n", trials=15)
    a, b = run_experiment(c).csv(), run_experiment(c).csv()
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a)))
    assert len(rows) == 16 and rows[-1]["trial"] == "summary"
    for r in rows[:-1]:
        assert int(r["bits_total"]) == int(r["bits_phase1"]) + int(r["bits_phase2"])
        assert int(r["bits_total"]) <= int(r["l_max"]) == 25
        assert r["theorem2_budget"] == "25"
    err = float(rows[-1]["error_rate"])
    assert err == pytest.approx(1 - sum(int(r["correct"]) for r in rows[:-1]) / 15)


def test_float_columns_round_trip():
    res = run_experiment(cfg("bounds = second_order, simple_bound\n", trials=2))
    rows = list(csv.DictReader(io.StringIO(res.csv())))
    assert float(rows[0]["second_order"]) == res.rows[0]["second_order"]
    assert float(rows[0]["simple_bound"]) == res.rows[0]["simple_bound"]


@pytest.mark.parametrize("protocol, extra", [
    ("baseline_sw", ""), ("interactive_sw", ""), ("type_protocol", "rate = 3\ntype_delta = 0.5\n")])
def test_other_protocols_run(protocol, extra):
    res = run_experiment(cfg(extra, protocol=protocol, n=6, trials=5))
    assert len(res.rows) == 6


def test_build_rejects_fractional_delta():
    with pytest.raises(ConfigError) as exc:
        build_protocol(cfg("delta = 1.5\n"))
    assert exc.value.field == "delta"


# -------------------------------------------------------------- wire


frames = st.builds(lambda s, k, n, v: Message(s, k, 1 if k in (Kind.ACK, Kind.NACK) else n,
                                              (v % 2) if k in (Kind.ACK, Kind.NACK) else v % (1 << n)),
                   st.sampled_from([1, 2]), st.sampled_from(list(Kind)), st.integers(0, 90), st.integers(0, 2**100))


@given(frames)
def test_frame_round_trip(msg):
    data = wire.encode_message(msg)
    assert data[:2] == b"DX" and data[2] == wire.VERSION
    assert int.from_bytes(data[5:9], "big") == msg.nbits
    assert len(data) == 9 + (msg.nbits + 7) // 8
    assert wire.decode_frame(data) == msg


def test_frame_rejections():
    good = wire.encode_message(Message(1, Kind.HASH_BLOCK, 3, 5))
    with pytest.raises(WireFormatError):
        wire.decode_frame(good[:2] + bytes([2]) + good[3:])
    with pytest.raises(WireFormatError):
        wire.decode_frame(b"XY" + good[2:])
    with pytest.raises(WireFormatError):
        wire.decode_frame(good[:-1] + b"\xff")  # high padding bits set
    with pytest.raises(WireFormatError):
        wire.decode_frame(good[:4] + bytes([99]) + good[5:])
    kind, sender, obj = wire.decode_frame(wire.encode_json(2, wire.TransportKind.REVEAL, {"a": [1, 2]}))
    assert (kind, sender, obj) == (wire.TransportKind.REVEAL, 2, {"a": [1, 2]})


def _pair(c1, c2, trials=None):
    a, b = socket.socketpair()
    out, errs = {}, {}

    def go(name, sock, c):
        try:
            out[name] = run_experiment(c, sock=sock)
        except Exception as exc:  # surfaced to the test
            errs[name] = exc
        finally:
            sock.close()

    t = threading.Thread(target=go, args=("L", a, c1))
    t.start()
    go("C", b, c2)
    t.join()
    return out, errs


def test_loopback_equals_simulate():
    c = cfg(trials=25)
    sim = run_experiment(c)
    out, errs = _pair(c.with_overrides(mode="peer-listen"), c.with_overrides(mode="peer-connect"))
    assert not errs
    for side in ("L", "C"):
        assert [t.to_bytes() for t in out[side].transcripts] == [t.to_bytes() for t in sim.transcripts]
        assert out[side].csv() == sim.csv()


def test_loopback_budget_abort_matches():
    c = cfg(trials=25, l_max=16)
    sim = run_experiment(c)
    assert any(o.error_kind.value == "budget_exceeded" for o in sim.outcomes)
    out, errs = _pair(c.with_overrides(mode="peer-listen"), c.with_overrides(mode="peer-connect"))
    assert not errs and out["L"].csv() == sim.csv()


def test_handshake_mismatch_before_protocol_bits():
    c = cfg(trials=3)
    out, errs = _pair(c.with_overrides(mode="peer-listen"), c.with_overrides(mode="peer-connect", delta="2"))
    assert isinstance(errs["L"], HandshakeMismatch) and isinstance(errs["C"], HandshakeMismatch)
    assert "delta_mb" in str(errs["C"])


def test_killed_peer_is_connection_lost():
    c = cfg(trials=3, mode="peer-listen")
    a, b = socket.socketpair()

    def die():
        wire.FrameStream(b).recv()  # read the handshake, then vanish
        b.close()

    t = threading.Thread(target=die)
    t.start()
    with pytest.raises(ConnectionLost):
        peer_session(c, a)
    t.join()
    a.close()


# -------------------------------------------------------------- cli


def test_cli_run_and_bounds(tmp_path, capsys):
    out = tmp_path / "r.csv"
    rc = main(["run", "--source", str(DEMOS / "zchannel.src"), "--seed", "3", "--n", "6", "--trials", "4",
               "--output", str(out)])
    assert rc == 0 and len(out.read_text().splitlines()) == 6
    rc = main(["bounds", "--source", str(DEMOS / "zchannel.src"), "--ns", "6,8", "--epsilons", "0.1",
               "--bounds", "theorem2_budget,second_order"])
    text = capsys.readouterr().out
    assert rc == 0 and text.splitlines()[0] == "n,epsilon,theorem2_budget,theorem2_error_bound,second_order"


def test_cli_config_and_errors(tmp_path, capsys):
    assert main(["run", "--source", str(DEMOS / "zchannel.src")]) == 2
    assert "seed" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("include x.src\nseed = 1\nn = many\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_cli_exponents_and_certify(capsys):
    assert main(["exponents", "--source", str(DEMOS / "zchannel.src"), "--rates", "1.2,1.3833"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert float(rows[0]["E_sp"]) == 0.0 and float(rows[1]["E_sp"]) > 0
    assert main(["certify", "--m", "16", "--l", "8", "--trials", "2000", "--skip-invariants"]) == 0
    assert capsys.readouterr().out.count("PASS") == 2


def test_cli_peer_verbs(tmp_path):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    common = ["--source", str(DEMOS / "zchannel.src"), "--seed", "5", "--trials", "5", "--port", str(port)]
    res = {}
    t = threading.Thread(target=lambda: res.setdefault("L", main(["peer", "listen", *common,
                                                                  "--output", str(tmp_path / "l.csv")])))
    t.start()
    for _ in range(100):  # the listener may not be bound yet
        rc = main(["peer", "connect", *common, "--output", str(tmp_path / "c.csv")])
        if rc == 0:
            break
        time.sleep(0.05)
    t.join()
    sim = tmp_path / "s.csv"
    main(["run", *common, "--output", str(sim)])
    assert rc == 0 and res["L"] == 0
    assert (tmp_path / "l.csv").read_text() == (tmp_path / "c.csv").read_text() == sim.read_text()
