"""Quick self-checks run by ``dxchange certify``."""

from __future__ import annotations

import numpy as np

from ..bounds import beta_epsilon
from ..protocols import DataExchange, InteractiveSwParams, conditional_decode, conditional_encode
from ..session import Transcript, run_trial
from ..sources import JointSource, SequenceSource, exact_sum_density_distribution, sample
from ..spectrum import make_plan
from ..typescheme import conditional_index, conditional_unrank, joint_type
from . import wire


def run_invariant_suite(seed: int = 0, trials: int = 200) -> list:
    """Returns ``(name, passed, detail)`` tuples."""
    out = []
    rng = np.random.default_rng(seed)
    src = SequenceSource.iid(JointSource.z_channel(), 8)
    plan = make_plan(exact_sum_density_distribution(src, "x_given_y"), integral_delta=True)
    params = InteractiveSwParams.from_plan(plan, 6)
    proto = DataExchange(src, params)

    law_ok, rt_ok, frame_ok = True, True, True
    for t in range(trials):
        _, _, res, tr = run_trial(proto, src, seed, t)
        if res.correct and res.bits_phase1 != params.phase1_bits(res.stop_round):
            law_ok = False
        rt_ok &= Transcript.from_bytes(tr.to_bytes()) == tr
        frame_ok &= all(wire.decode_frame(wire.encode_message(m)) == m for m in tr.entries)
    out.append(("phase-1 bit law", law_ok, f"{trials} trials"))
    out.append(("transcript round trip", rt_ok, f"{trials} transcripts"))
    out.append(("wire frame round trip", frame_ok, f"{trials} transcripts"))

    code_ok, rank_ok = True, True
    for _ in range(50):
        x, y = sample(src, rng)
        v, k = conditional_encode(src, x, y)
        code_ok &= bool(np.array_equal(conditional_decode(src, x, v, k), y))
        jt = joint_type(x, y)
        rank_ok &= bool(np.array_equal(conditional_unrank(x, jt, conditional_index(x, y, jt)), y))
    out.append(("conditional code round trip", code_ok, "50 pairs"))
    out.append(("conditional rank round trip", rank_ok, "50 pairs"))

    P = rng.dirichlet(np.ones(4))
    b = beta_epsilon(P, P, 0.1)
    out.append(("beta(P, P) = 1 - eps", abs(b - 0.9) < 1e-12, f"beta={b!r}"))
    return out
