"""Finite-precision channel: rounding budgets, error certificates."""

import math
from fractions import Fraction

import numpy as np
import pytest

from qtmlab.channel import (
    ApproxChannel,
    ChannelError,
    as_fraction,
    build_channel,
    error_certificate,
    factored_distance,
    random_pure_inputs,
    step_distances,
)
from qtmlab.machines import ConfigSpace
from qtmlab.operators import Operator


def basis_sigma(x: str) -> Operator:
    n = 1 << len(x)
    v = np.zeros(n, dtype=np.complex128)
    v[int(x, 2) if x else 0] = 1.0
    return Operator(np.outer(v, v.conj()), hermitian=True, psd=True)


def test_as_fraction_forms():
    assert as_fraction("1/8") == Fraction(1, 8)
    assert as_fraction(0.25) == Fraction(1, 4)
    assert as_fraction(Fraction(1, 32)) == Fraction(1, 32)
    assert as_fraction(1) == 1


def test_dyadic_machine_rounds_to_itself(corpus):
    # 0/1 amplitudes are exactly representable: u~ = u, no sub-normalization
    ch = build_channel(corpus["id1"], k=1, t=2, delta=Fraction(1, 8), window=4)
    assert ch.round_defect == 0.0
    assert ch.trace_scale == 1.0
    assert (ch.u != ch.u_tilde).nnz == 0
    cert = error_certificate(ch, [basis_sigma("0"), basis_sigma("1")])
    assert cert.ok
    assert cert.max_final <= 1e-12
    assert cert.max_step_ratio <= 1e-12


def test_budget_derivation(corpus):
    m = corpus["mz1"]
    ch = build_channel(m, k=1, t=2, delta="1/8", window=4)
    assert ch.gamma == Fraction(1, 16)
    assert ch.entry_budget == ch.gamma / (6 * ch.dim)
    assert ch.round_budget == ch.gamma / 6
    # grid spacing 2^-bits is at most half the per-entry budget
    assert Fraction(2, 2**ch.precision_bits) <= ch.entry_budget
    assert 0.0 < ch.round_defect <= float(ch.round_budget)


def test_default_window(corpus):
    m = corpus["id1"]
    ch = build_channel(m, k=1, t=3, delta="1/4")
    assert ch.window == m.window + 6
    assert ch.dim == ConfigSpace(m, ch.window).dim


def test_build_rejects_bad_arguments(corpus):
    m = corpus["id1"]
    with pytest.raises(ChannelError, match="t must be"):
        build_channel(m, k=1, t=0, delta="1/8")
    with pytest.raises(ChannelError, match="delta"):
        build_channel(m, k=1, t=1, delta=0)
    with pytest.raises(ChannelError, match="delta"):
        build_channel(m, k=1, t=1, delta=2)
    with pytest.raises(ChannelError, match="exceeds window"):
        build_channel(m, k=6, t=1, delta="1/8", window=4)


def test_channel_is_trace_nonincreasing(corpus, rng):
    # the rounded step inflates norms; the Kraus scaling must absorb that
    # for every input, not just on average
    for name in ("mz1", "nohalt1"):
        ch = build_channel(corpus[name], k=2, t=3, delta="1/4", window=4)
        assert ch.round_defect > 0.0
        assert ch.trace_scale < 1.0
        for sigma in random_pure_inputs(2, 10, rng):
            out = ch.apply(sigma)
            assert out.trace() <= 1.0 + 1e-12
        half = basis_sigma("01").scale(0.5)
        assert ch.apply(half).trace() <= 0.5 + 1e-12


def test_step_distances_within_accumulation_bound(corpus, rng):
    ch = build_channel(corpus["mz1"], k=1, t=4, delta="1/8", window=4)
    gamma = float(ch.gamma)
    for sigma in random_pure_inputs(1, 8, rng):
        dists = step_distances(ch, sigma)
        assert len(dists) == ch.t
        for ell, d in enumerate(dists, start=1):
            assert d <= gamma * ell + 1e-9


def test_certificate_on_random_inputs(corpus, rng):
    ch = build_channel(corpus["mz1"], k=2, t=2, delta="1/8", window=4)
    cert = error_certificate(ch, random_pure_inputs(2, 12, rng))
    assert cert.ok
    assert cert.samples == 12
    assert cert.max_final <= float(ch.delta)
    assert cert.max_final <= 1e-6  # rounding at ~26 bits is far below budget
    assert cert.max_step_ratio <= 1.0
    assert cert.round_defect <= cert.round_budget


def test_channel_output_matches_machine_run(corpus):
    # with u~ = u and t at the halting time, the channel reproduces the
    # machine output exactly
    from qtmlab.evolution import run_machine

    m = corpus["id1"]
    ch = build_channel(m, k=2, t=1, delta="1/8", window=4)
    sigma = basis_sigma("10")
    _, expected = run_machine(ConfigSpace(m, 4), sigma)
    assert ch.apply(sigma).distance(expected) <= 1e-12


def test_exact_arm_is_unscaled(corpus, rng):
    ch = build_channel(corpus["mz1"], k=1, t=2, delta="1/8", window=4)
    (sigma,) = random_pure_inputs(1, 1, rng)
    exact_out = ch.apply_exact_arm(sigma)
    assert exact_out.trace() == pytest.approx(1.0, abs=1e-12)
    assert ch.apply(sigma).trace() <= exact_out.trace() + 1e-12


def test_factored_distance_matches_dense_oracle(rng):
    # independent check via eigenvalues of the dense difference
    n, r = 12, 3
    a = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    b = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    w = rng.random(r)
    dense = sum(
        w[i] * (np.outer(a[:, i], a[:, i].conj()) - np.outer(b[:, i], b[:, i].conj()))
        for i in range(r)
    )
    oracle = float(np.sum(np.abs(np.linalg.eigvalsh((dense + dense.conj().T) / 2))) / 2)
    got = factored_distance(a, b, w)
    assert got == pytest.approx(oracle, abs=1e-9)


def test_tight_delta_still_buildable(corpus):
    # delta = 1/32 over 4 steps forces ~22 bits of precision; the defect
    # certificate must still clear its budget
    ch = build_channel(corpus["mz1"], k=1, t=4, delta="1/32", window=4)
    assert ch.precision_bits >= 20
    assert ch.round_defect <= float(ch.round_budget)
    cert = error_certificate(ch, [basis_sigma("0"), basis_sigma("1")])
    assert cert.ok
