"""Evolution assembly, halting profiles, output extraction."""

import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from qtmlab.evolution import (
    EvolveError,
    FactoredState,
    IndeterminateState,
    MissingRuleError,
    OutputTooLongError,
    build_evolution,
    evolve,
    exact_step,
    extract_output,
    halting_profile,
    run_machine,
    wellformed_check,
)
from qtmlab.exactnum import ExactComplex
from qtmlab.machines import ConfigSpace, parse_machine
from qtmlab.operators import Operator, ind_dim, ind_index

DATA = Path(__file__).parent / "data"

EXACT_CORPUS = ["id1", "copy1", "branch1", "nohalt1", "tri1"]


def sigma_exact(x: str) -> Operator:
    """Exact diagonal |x><x| on Q_len(x); triggers the exact halting path."""
    n = 1 << len(x)
    vals = [Fraction(0)] * n
    vals[int(x, 2) if x else 0] = Fraction(1)
    return Operator.diagonal_op(vals)


def sigma_float(x: str) -> Operator:
    n = 1 << len(x)
    v = np.zeros(n, dtype=np.complex128)
    v[int(x, 2) if x else 0] = 1.0
    return Operator(np.outer(v, v.conj()), hermitian=True, psd=True)


def pure_output(x: str, max_len=None) -> IndeterminateState:
    max_len = len(x) if max_len is None else max_len
    v = np.zeros(ind_dim(max_len), dtype=np.complex128)
    v[ind_index(x)] = 1.0
    return IndeterminateState(max_len, [(1.0, v)])


# -- well-formedness ----------------------------------------------------------


def test_wellformed_corpus(corpus):
    for name, m in corpus.items():
        report = wellformed_check(ConfigSpace(m, m.window))
        assert report.passed, f"{name}: defect {report.defect}"
        assert report.defect <= 1e-9
        if name in EXACT_CORPUS:
            assert report.backend == "exact"
            assert report.exact_zero
        else:
            assert report.backend == "float"
            assert not report.exact_zero


def test_wellformed_matches_dense_oracle(corpus):
    # independent check: materialize u and measure max |u u* - I| with numpy
    for name in ("id1", "mz1"):
        cs = ConfigSpace(corpus[name], corpus[name].window)
        u = build_evolution(cs).csr.toarray()
        defect = float(np.max(np.abs(u @ u.conj().T - np.eye(cs.dim))))
        report = wellformed_check(cs)
        assert defect <= 1e-9
        assert abs(report.defect - defect) <= 1e-12


def test_wellformed_rejects_nonunitary_machine():
    m = parse_machine((DATA / "bad1.qtm").read_text())
    report = wellformed_check(ConfigSpace(m, m.window))
    assert not report.passed
    assert report.defect == pytest.approx(1.0)
    assert report.backend == "exact"


def test_missing_rule_reported_with_description():
    m = parse_machine((DATA / "missing1.qtm").read_text())
    cs = ConfigSpace(m, m.window)
    with pytest.raises(MissingRuleError, match="no rule for configuration"):
        build_evolution(cs)
    with pytest.raises(MissingRuleError, match="s"):
        exact_step(cs, {cs.encode(0, [cs.blank_content], [0]): ExactComplex(1)})


def test_revival_maps_final_to_start(corpus):
    # the completion block: (final, syms) -> (start, syms, heads + 1)
    m = corpus["id1"]
    cs = ConfigSpace(m, m.window)
    contents = [cs.input_content("01")]
    src = cs.encode(cs.final_index, contents, [2])
    out = exact_step(cs, {src: ExactComplex(1)})
    assert out == {cs.encode(cs.start_index, contents, [3]): ExactComplex(1)}
    # heads wrap around the looped window
    src = cs.encode(cs.final_index, contents, [cs.window - 1])
    (tgt,) = exact_step(cs, {src: ExactComplex(1)})
    assert tgt == cs.encode(cs.start_index, contents, [0])


# -- halting profiles ---------------------------------------------------------

HALTING_GOLDEN = [
    ("id1", "0", 1),
    ("id1", "1", 1),
    ("id1", "01", 1),
    ("id1", "11", 1),
    ("copy1", "0", 3),
    ("copy1", "1", 3),
    ("copy1", "10", 3),
    ("copy1", "11", 3),
    ("branch1", "0", 3),
    ("branch1", "00", 3),
    ("branch1", "011", 3),
    ("branch1", "1", 13),
    ("branch1", "10", 13),
    ("branch1", "100", 13),
    ("branch1", "11", 9),
    ("branch1", "110", 9),
    ("branch1", "101", 5),
    ("branch1", "111", 5),
    ("mz1", "0", 2),
    ("mz1", "1", 2),
    ("tri1", "0", 1),
    ("tri1", "1", 1),
]


@pytest.mark.parametrize("name,x,t", HALTING_GOLDEN)
def test_halting_times(corpus, name, x, t):
    m = corpus[name]
    cs = ConfigSpace(m, m.window)
    profile = halting_profile(cs, sigma_float(x))
    assert profile.halted
    assert profile.t == t
    # halting weight is 0 strictly before t and 1 at t
    assert all(float(w) <= profile.eta for w in profile.weights[:t])
    assert float(profile.weight(t)) >= 1 - profile.eta


@pytest.mark.parametrize(
    "name,x,t",
    [(n, x, t) for n, x, t in HALTING_GOLDEN if n in EXACT_CORPUS],
)
def test_halting_times_exact_path(corpus, name, x, t):
    m = corpus[name]
    cs = ConfigSpace(m, m.window)
    profile = halting_profile(cs, sigma_exact(x))
    assert profile.exact
    assert profile.eta == 0.0
    assert profile.halted and profile.t == t
    assert all(isinstance(w, Fraction) for w in profile.weights)
    assert profile.weights[t] == 1
    assert all(w == 0 for w in profile.weights[:t])


def test_exact_and_float_weights_agree(corpus):
    m = corpus["branch1"]
    cs = ConfigSpace(m, m.window)
    exact = halting_profile(cs, sigma_exact("101"), t_max=8)
    approx = halting_profile(cs, sigma_float("101"), t_max=8)
    assert not approx.exact and approx.eta == 1e-6
    for we, wf in zip(exact.weights, approx.weights):
        assert abs(float(we) - wf) <= 1e-12


def test_nohalt_slides_through(corpus):
    m = corpus["nohalt1"]
    cs = ConfigSpace(m, m.window)
    profile = halting_profile(cs, sigma_exact("0"))
    assert not profile.halted
    assert profile.t is None
    assert profile.weights[1] == Fraction(9, 25)
    assert "slides through" in profile.diagnostic
    assert "t=1" in profile.diagnostic


def test_never_reaching_final_diagnostic(corpus):
    # mz1 cannot reach weight ~1 by t_max=1 (it needs two steps)
    m = corpus["mz1"]
    cs = ConfigSpace(m, m.window)
    profile = halting_profile(cs, sigma_float("0"), t_max=1)
    assert not profile.halted
    assert "never reached" in profile.diagnostic


def test_mixed_diagonal_input_blocks_on_split_times(corpus):
    # equal mixture of '011' (t=3) and '111' (t=5): weight 1/2 at t=3
    m = corpus["branch1"]
    cs = ConfigSpace(m, m.window)
    vals = [Fraction(0)] * 8
    vals[int("011", 2)] = Fraction(1, 2)
    vals[int("111", 2)] = Fraction(1, 2)
    profile = halting_profile(cs, Operator.diagonal_op(vals))
    assert not profile.halted
    assert profile.weights[3] == Fraction(1, 2)
    assert "slides through" in profile.diagnostic


# -- output extraction --------------------------------------------------------


@pytest.mark.parametrize(
    "name,x",
    [
        ("id1", "0"),
        ("id1", "01"),
        ("copy1", "0"),
        ("copy1", "10"),
        ("copy1", "11"),
        ("mz1", "0"),
        ("mz1", "1"),
        ("branch1", "101"),
        ("branch1", "110"),
    ],
)
def test_output_equals_input(corpus, name, x):
    m = corpus[name]
    cs = ConfigSpace(m, m.window)
    profile, out = run_machine(cs, sigma_float(x))
    assert profile.halted
    assert out.trace() == pytest.approx(1.0, abs=1e-9)
    assert out.expectation(x) == pytest.approx(1.0, abs=1e-9)
    assert out.distance(pure_output(x, out.max_len)) <= 1e-9


def test_tri1_output_is_empty(corpus):
    m = corpus["tri1"]
    cs = ConfigSpace(m, m.window)
    profile, out = run_machine(cs, sigma_float("1"))
    assert profile.halted and profile.t == 1
    assert out.expectation("") == pytest.approx(1.0, abs=1e-12)
    assert out.lambda_weight == pytest.approx(0.0, abs=1e-12)


def test_superposition_output_is_coherent(corpus):
    # (|00> + |11>)/sqrt(2) on the identity copier must come out pure,
    # not as a classical mixture of '00' and '11'
    m = corpus["copy1"]
    cs = ConfigSpace(m, m.window)
    v = np.zeros(4, dtype=np.complex128)
    v[0b00] = v[0b11] = 1 / math.sqrt(2)
    sigma = Operator(np.outer(v, v.conj()), hermitian=True, psd=True)
    profile, out = run_machine(cs, sigma)
    assert profile.halted and profile.t == 3
    target = np.zeros(ind_dim(out.max_len), dtype=np.complex128)
    target[ind_index("00")] = target[ind_index("11")] = 1 / math.sqrt(2)
    expected = IndeterminateState(out.max_len, [(1.0, target)])
    assert out.distance(expected) <= 1e-9
    # the mixture sits at distance 1/2 from the pure state
    mixed = pure_output("00", out.max_len).scale(0.5) + pure_output(
        "11", out.max_len
    ).scale(0.5)
    assert out.distance(mixed) == pytest.approx(0.5, abs=1e-9)


def test_nonhalting_run_returns_no_output(corpus):
    m = corpus["nohalt1"]
    cs = ConfigSpace(m, m.window)
    profile, out = run_machine(cs, sigma_float("0"))
    assert not profile.halted
    assert out is None


def test_output_too_long(corpus):
    m = corpus["id1"]
    cs = ConfigSpace(m, m.window)
    with pytest.raises(OutputTooLongError):
        run_machine(cs, sigma_float("01"), max_len=1)


def test_extract_requires_matching_dimension(corpus):
    m = corpus["id1"]
    cs = ConfigSpace(m, m.window)
    with pytest.raises(ValueError, match="dim"):
        extract_output(cs, Operator.identity(4).scale(0.25))


def test_evolve_preserves_trace(corpus):
    m = corpus["mz1"]
    cs = ConfigSpace(m, m.window)
    from qtmlab.evolution import embed_input

    rho = evolve(cs, embed_input(cs, sigma_float("1")), 4)
    assert rho.trace().real == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(EvolveError, match="negative"):
        evolve(cs, embed_input(cs, sigma_float("1")), -1)
    with pytest.raises(EvolveError, match="dim"):
        evolve(cs, Operator.identity(2), 1)


# -- indeterminate-length states ----------------------------------------------


def test_indeterminate_state_basics():
    a = pure_output("01", 3)
    assert a.trace() == pytest.approx(1.0)
    assert a.expectation("01") == 1.0
    assert a.expectation("10") == 0.0
    assert a.expectation("010") == 0.0
    blk = a.block(2)
    assert blk.shape == (4, 4)
    assert blk[ind_index("01") - 3, ind_index("01") - 3] == pytest.approx(1.0)
    assert np.trace(a.block(1)) == pytest.approx(0.0)


def test_indeterminate_distance_metric():
    a = pure_output("0", 2)
    b = pure_output("1", 2)
    assert a.distance(b) == pytest.approx(1.0)
    assert a.distance(a) <= 1e-15
    c = a.scale(0.5) + b.scale(0.5)
    assert a.distance(c) == pytest.approx(0.5, abs=1e-12)
    assert a.distance(c) <= a.distance(b)


def test_lambda_weight_lives_on_empty_string():
    s = IndeterminateState(2, lambda_weight=0.25)
    assert s.expectation("") == 0.25
    assert s.trace() == 0.25
    assert s.block(0)[0, 0] == pytest.approx(0.25)
    s.validate_semidensity()
    t = IndeterminateState(1, lambda_weight=1.5)
    with pytest.raises(ValueError, match="trace"):
        t.validate_semidensity()


def test_factored_state_trace():
    cols = np.zeros((6, 2), dtype=np.complex128)
    cols[0, 0] = 1.0
    cols[1, 1] = 1 / math.sqrt(2)
    fs = FactoredState(cols, np.array([0.5, 0.5]))
    assert fs.rank == 2
    assert fs.trace() == pytest.approx(0.75)
