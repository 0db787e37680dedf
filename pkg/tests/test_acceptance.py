"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints.
Run standalone with ``python tests/test_acceptance.py``.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import lu_det, random_complex, unit_det, with_singular_values
from stmulticast import cli
from stmulticast.capacity import (
    achievable_fraction,
    benchmark_beamforming_rate,
    build_example,
    high_snr_example,
    multicast_capacity,
    mutual_information,
    timesharing_rate,
    waterfill_capacity,
)
from stmulticast.decomp import gmd, jet2, kgmd_spacetime, verify_decomp
from stmulticast.linalg import is_unitary, is_upper_triangular
from stmulticast.scheme import ChannelSet, augment, plan_multicast


@contextmanager
def criterion(number, title, limit):
    line = f"criterion {number} {{}} {title}"
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE[number] = line.format("FAIL") + f": {type(exc).__name__}: {exc}"
        print(ACCEPTANCE[number])
        raise
    elapsed = time.perf_counter() - start
    ok = elapsed < limit
    ACCEPTANCE[number] = line.format("PASS" if ok else "FAIL") + f" ({elapsed:.2f} s, limit {limit} s)"
    print(ACCEPTANCE[number])
    assert ok, f"runtime {elapsed:.2f} s exceeds {limit} s"


def example_scenario(tmp_path):
    path = tmp_path / "example.json"
    assert cli.main(["example", "--output", str(path)]) == 0
    return str(path)


def normalized_example_G():
    ex = build_example(10, 1.0)
    cx = 0.5 * np.eye(2)
    out = []
    for h in ex.H_list:
        g = augment(h, cx).G
        out.append(g / math.sqrt(abs(lu_det(g))))
    return out


def test_c1_table1(capsys):
    with criterion(1, "channel-use table rows", 1.0):
        code = cli.main(["table1"])
        lines = capsys.readouterr().out.splitlines()
        assert code == 0
        rows = {ln.split()[0]: [int(x) for x in ln.split()[1:]] for ln in lines[1:3]}
        assert rows["GMD"] == [5, 5, 6, 8, 9, 12, 15, 30]
        assert rows["JET"] == [2, 2, 2, 3, 3, 4, 5, 10]


def test_c2_caption_percentages():
    with criterion(2, "caption percentages", 10.0):
        ex = build_example(10, 1.0)
        c = multicast_capacity(ex).rate
        ts, bf = 100 * timesharing_rate(ex) / c, 100 * benchmark_beamforming_rate(ex) / c
        assert abs(ts - 37) <= 1, ts
        assert abs(bf - 67) <= 1, bf
        hi = high_snr_example()
        assert hi.P == 1e6
        c = multicast_capacity(hi).rate
        ts, bf = 100 * timesharing_rate(hi) / c, 100 * benchmark_beamforming_rate(hi) / c
        assert abs(ts - 33) <= 1, ts
        assert abs(bf - 50) <= 1, bf


def test_c3_golden_construction():
    with criterion(3, "three-user N=4 construction", 1.0):
        g = normalized_example_G()
        d = kgmd_spacetime(g, 4)
        assert d.theta_rows == [4, 5]
        assert d.m == 2 and len(d.T_list) == 3
        for t in d.T_list:
            assert t.shape == (2, 2)
            assert np.allclose(np.diag(t), 1.0, atol=1e-9)
        rep = verify_decomp(d, g)
        assert rep.reconstruction < 1e-9
        assert rep.orthonormality < 1e-9
        assert rep.below_diagonal < 1e-9
        assert rep.diagonal_deviation < 1e-9


def test_c4_property_suite():
    with criterion(4, "decomposition invariants over 500 seeds", 60.0):
        for seed in range(500):
            rng = np.random.default_rng([2024, seed])
            n = int(rng.integers(1, 6))
            sv = np.exp(rng.uniform(-2, 2, n))
            a = with_singular_values(rng, sv)
            r = gmd(a)
            scale = np.linalg.norm(a)
            assert np.linalg.norm(r.U @ r.T @ r.V.conj().T - a) / scale < 1e-8
            g = float(np.exp(np.mean(np.log(sv))))
            assert np.max(np.abs(r.diagonal - g)) / g < 1e-8
            assert is_upper_triangular(r.T) and is_unitary(r.U) and is_unitary(r.V)

            a1, a2 = unit_det(rng, n), unit_det(rng, n)
            j = jet2(a1, a2)
            assert np.allclose(np.diag(j.R1), np.diag(j.R2), rtol=1e-8, atol=1e-10)
            assert np.linalg.norm(j.U1 @ j.R1 @ j.V.conj().T - a1) / np.linalg.norm(a1) < 1e-8
            assert np.linalg.norm(j.U2 @ j.R2 @ j.V.conj().T - a2) / np.linalg.norm(a2) < 1e-8

            K = int(rng.integers(2, 4))
            N = 2 ** (K - 1) + int(rng.integers(0, 7))
            mats = [unit_det(rng, 2) for _ in range(K)]
            d = kgmd_spacetime(mats, N)
            assert d.m == 2 * (N - (2 ** (K - 1) - 1))
            assert np.allclose(d.diag_value_list, 1.0, rtol=1e-9)
            for t in d.T_list:
                assert np.allclose(np.diag(t), 1.0, atol=1e-8)
            assert verify_decomp(d, mats).max_defect() < 1e-8


def test_c5_rate_identity():
    with criterion(5, "per-use rate identity", 1.0):
        ex = build_example(10, 1.0)
        cs = ChannelSet(ex.H_list, 1.0)
        N = 4
        plan = plan_multicast(cs, N, allow_unequal=True)
        for h, sinr in zip(cs.H_list, plan.full_stream_sinr):
            per_use = float(np.sum(np.log2(1 + np.asarray(sinr)))) / N
            want = mutual_information(h, cs.Cx)
            assert abs(per_use - want) / want < 1e-6, (per_use, want)


def test_c6_monte_carlo(tmp_path, capsys):
    with criterion(6, "Monte-Carlo SINR within 5%", 120.0):
        path = example_scenario(tmp_path)
        capsys.readouterr()
        code = cli.main(["simulate", path, "-N", "4", "--trials", "100000", "--seed", "2024",
                         "--allow-unequal", "--json"])
        rep = json.loads(capsys.readouterr().out)
        assert code == 0 and rep["trials"] == 100_000
        assert len(rep["users"]) == 3
        for u in rep["users"]:
            t = u["diag_value"]
            assert np.allclose(u["predicted_sinr"], t * t - 1)
            err = np.abs(np.array(u["measured_sinr"]) / (t * t - 1) - 1)
            assert np.all(err < 0.05), err


def test_c7_capacity():
    with criterion(7, "capacity optimizer and sandwich bounds", 60.0):
        res = multicast_capacity(build_example(10, 1.0))
        assert abs(res.rate - 9.0014) <= 1e-3
        c = res.covariance
        assert np.allclose(c, c.conj().T)
        assert np.linalg.eigvalsh(c).min() >= -1e-12
        assert np.trace(c).real <= 1.0 + 1e-9

        rng = np.random.default_rng(7)
        for _ in range(100):
            K = int(rng.integers(2, 4))
            hs = [random_complex(rng, (int(rng.integers(1, 3)), 2)) for _ in range(K)]
            P = float(rng.uniform(0.5, 10.0))
            cap = multicast_capacity(hs, P)
            bench = benchmark_beamforming_rate(hs, P)
            single = min(waterfill_capacity(h, P)[0] for h in hs)
            assert bench <= cap.rate + cap.gap + 1e-9
            assert cap.rate <= single + 1e-9
            assert multicast_capacity(hs, 2 * P).rate >= cap.rate - 1e-9
            assert multicast_capacity(hs[:-1], P).rate >= cap.rate - 1e-9


def test_c8_asymptotic_fraction():
    with criterion(8, "achievable fraction above 0.99 for N >= 300", 1.0):
        for N in range(300, 5001):
            assert achievable_fraction(2, 3, N, "GMD") >= 0.99
        assert achievable_fraction(2, 3, 299, "GMD") < 0.99


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
