import pytest
from hypothesis import given
from hypothesis import strategies as st

from qtmlab.machines import (
    CORPUS_MACHINES,
    ConfigSpace,
    MachineSyntaxError,
    MachineValidationError,
    corpus_path,
    load_corpus_machine,
    parse_machine,
)

MINIMAL = """
machine tiny
tapes 1
window 3
states s f
start s
final f
rule s 0 -> f 0 R 1 0
rule s 1 -> f 1 R 1 0
rule s # -> f # R 1 0
"""


def test_parse_minimal_machine():
    m = parse_machine(MINIMAL)
    assert m.name == "tiny"
    assert m.states == ("s", "f")
    assert len(m.rules) == 3
    assert m.is_exact
    assert m.rules[0].amp.shadow == 1 + 0j


def test_corpus_loads_with_expected_shapes(corpus):
    assert set(corpus) == set(CORPUS_MACHINES)
    expected_dims = {
        "id1": 2 * (3**4 * 4),
        "copy1": 4 * (3**6 * 6),
        "branch1": 6 * (3**5 * 5),
        "nohalt1": 3 * (3**4 * 4),
        "mz1": 5 * (3**4 * 4),
        "tri1": 2 * (3**2 * 2) ** 3,
    }
    for name, m in corpus.items():
        cs = ConfigSpace(m)
        assert cs.dim == expected_dims[name]
        assert cs.block == 3**cs.window * cs.window


def test_exactness_flags(corpus):
    assert corpus["id1"].is_exact
    assert corpus["branch1"].is_exact
    assert corpus["nohalt1"].is_exact
    assert not corpus["mz1"].is_exact  # decimal 1/sqrt(2) amplitudes


@pytest.mark.parametrize(
    "mutation, message",
    [
        ("rule s 0 -> f 0 R 1", "rule format"),
        ("rule s 0 -> g 0 R 1 0", "unknown state"),
        ("rule s 00 -> f 0 R 1 0", "read symbols"),
        ("rule s 0 -> f 0 X 1 0", "moves"),
        ("rule s 0 -> f 0 R 1/0 0", "zero denominator"),
        ("wat 3", "unknown keyword"),
    ],
)
def test_parse_errors_carry_line_numbers(mutation, message):
    text = MINIMAL + mutation + "\n"
    with pytest.raises(MachineSyntaxError) as exc:
        parse_machine(text)
    assert message in str(exc.value)
    assert exc.value.line is not None


def test_duplicate_rule_rejected():
    text = MINIMAL + "rule s 0 -> f 0 R 1 0\n"
    with pytest.raises(MachineSyntaxError, match="duplicate"):
        parse_machine(text)


def test_validation_errors():
    with pytest.raises(MachineValidationError, match="final is reserved"):
        parse_machine(MINIMAL + "rule f 0 -> s 0 R 1 0\n")
    with pytest.raises(MachineValidationError, match="must differ"):
        parse_machine(MINIMAL.replace("final f", "final s"))
    headers_only = "\n".join(
        ln for ln in MINIMAL.splitlines() if not ln.startswith("rule")
    )
    with pytest.raises(MachineValidationError, match="tapes"):
        parse_machine(headers_only.replace("tapes 1", "tapes 4"))


def test_missing_header():
    with pytest.raises(MachineSyntaxError, match="missing"):
        parse_machine("machine x\ntapes 1\nwindow 3\nstates s f\nstart s\n")


def test_corpus_path_handles_extensions():
    assert corpus_path("id1").name == "id1.qtm"
    assert corpus_path("corpus4.txt").name == "corpus4.txt"
    assert load_corpus_machine("id1").name == "id1"


# -- configuration indexing -----------------------------------------------------


@given(
    window=st.integers(min_value=2, max_value=5),
    tapes=st.integers(min_value=1, max_value=3),
    data=st.data(),
)
def test_encode_decode_bijection(window, tapes, data):
    text = MINIMAL.replace("tapes 1", f"tapes {tapes}").replace("window 3", f"window {window}")
    text = "\n".join(ln for ln in text.splitlines() if not ln.startswith("rule"))
    m = parse_machine(text)
    cs = ConfigSpace(m)
    state = data.draw(st.integers(min_value=0, max_value=cs.n_states - 1))
    contents = [
        data.draw(st.integers(min_value=0, max_value=3**window - 1)) for _ in range(tapes)
    ]
    heads = [data.draw(st.integers(min_value=0, max_value=window - 1)) for _ in range(tapes)]
    idx = cs.encode(state, contents, heads)
    assert 0 <= idx < cs.dim
    s2, c2, h2 = cs.decode(idx)
    assert (s2, tuple(c2), tuple(h2)) == (state, tuple(contents), tuple(heads))


def test_decode_covers_every_index():
    m = parse_machine(MINIMAL)
    cs = ConfigSpace(m)
    seen = {cs.encode(*cs.decode(i)) for i in range(cs.dim)}
    assert seen == set(range(cs.dim))


def test_blank_tape_and_input_content():
    m = parse_machine(MINIMAL)
    cs = ConfigSpace(m)
    assert cs.tape_string(cs.blank_content) == "###"
    assert cs.tape_string(cs.input_content("10")) == "10#"
    assert cs.tape_string(cs.input_content("")) == "###"
    with pytest.raises(ValueError, match="exceeds window"):
        cs.input_content("0101")


def test_final_slice_is_contiguous_per_state():
    m = parse_machine(MINIMAL)
    cs = ConfigSpace(m)
    sl = cs.final_slice
    for idx in range(sl.start, sl.stop):
        state, _, _ = cs.decode(idx)
        assert state == cs.final_index
    assert sl.stop - sl.start == cs.block**cs.tapes


def test_embed_indices_msb_at_origin():
    m = parse_machine(MINIMAL)
    cs = ConfigSpace(m)
    idxs = cs.embed_indices(2)
    assert len(idxs) == 4
    # basis order is the integer value of the bit string
    state, contents, heads = cs.decode(int(idxs[int("10", 2)]))
    assert state == cs.start_index
    assert cs.tape_string(contents[0]) == "10#"
    assert heads == (0,)
    assert len(set(int(i) for i in idxs)) == 4


def test_embed_indices_aux_ignored_below_three_tapes():
    m = parse_machine(MINIMAL)
    cs = ConfigSpace(m)
    assert list(cs.embed_indices(2, aux="11")) == list(cs.embed_indices(2))


def test_embed_indices_aux_on_last_tape():
    m = load_corpus_machine("tri1")
    cs = ConfigSpace(m)
    with_aux = cs.embed_indices(1, aux="1")
    plain = cs.embed_indices(1)
    assert list(with_aux) != list(plain)
    _, contents, _ = cs.decode(int(with_aux[0]))
    assert cs.tape_string(contents[-1]).startswith("1")


def test_describe_names_state_and_tape():
    m = parse_machine(MINIMAL)
    cs = ConfigSpace(m)
    text = cs.describe(cs.embed_indices(1)[1])
    assert "state=s" in text and "'1##'" in text
