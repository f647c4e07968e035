import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergolab.errors import ErgolabError
from ergolab.expansion import itinerary
from ergolab.symbolic import SymbolStream, Word, iid_uniform, itinerary_stream, periodic, prefix, shift


def test_word_rejects_out_of_range_symbols():
    with pytest.raises(ErgolabError) as e:
        Word((0, 2), 2)
    assert e.value.code == "bad-symbol"


def test_empty_word_is_valid():
    w = Word((), 3)
    assert len(w) == 0 and w.to_json() == []


def test_one_based_printing():
    assert Word((0, 1, 2), 3).one_based() == [1, 2, 3]


def test_shift_of_period_two_word():
    s = shift(periodic((0, 1), 2))
    assert prefix(s, 4).symbols == (1, 0, 1, 0)


def test_shift_of_iid_stream_drops_first_symbol():
    s = iid_uniform(3, 7)
    first = prefix(s, 5).symbols
    assert prefix(shift(s), 4).symbols == first[1:]


def test_shift_n_times_equals_reading_from_n():
    s = iid_uniform(4, 11)
    t = s
    for _ in range(37):
        t = shift(t)
    assert np.array_equal(t.symbols(0, 100), s.symbols(37, 100))


def test_prefix_examples():
    assert len(prefix(periodic((0, 1), 2), 0)) == 0
    assert prefix(periodic((0, 1), 2), 5).symbols == (0, 1, 0, 1, 0)


def test_prefix_does_not_disturb_other_readers():
    s = iid_uniform(2, 3)
    a = prefix(s, 10)
    b = prefix(s, 10)
    assert a == b


def test_itinerary_stream_matches_itinerary(doubling):
    s = itinerary_stream(doubling, [0.3])
    assert prefix(s, 20) == itinerary(doubling, None, [0.3], 20)


def test_reproducible_first_1e5_symbols():
    a = iid_uniform(5, 2024).symbols(0, 10 ** 5)
    b = iid_uniform(5, 2024).symbols(0, 10 ** 5)
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() < 5


def test_block_boundaries_are_seamless():
    s = iid_uniform(7, 1)
    whole = s.symbols(0, 10000)
    assert np.array_equal(s.symbols(4090, 20), whole[4090:4110])


def test_json_forms():
    assert periodic((0, 1), 2).to_json()["params"] == [0, 1]
    assert iid_uniform(2, 9).to_json()["seed"] == 9


def test_bad_kind():
    with pytest.raises(ErgolabError):
        SymbolStream("markov", 2)


streams = st.one_of(
    st.builds(lambda w: periodic(w, 3), st.lists(st.integers(0, 2), min_size=1, max_size=6)),
    st.builds(lambda seed: iid_uniform(3, seed), st.integers(0, 2 ** 32 - 1)),
)


@settings(max_examples=60, deadline=None)
@given(streams, st.integers(0, 1000))
def test_prefix_of_shift_is_tail_of_prefix(s, n):
    assert prefix(shift(s), n).symbols == prefix(s, n + 1).symbols[1:]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 200))
def test_prefix_of_shift_itinerary(n):
    from ergolab.systems import doubling_family
    s = itinerary_stream(doubling_family(), [0.1234567])
    assert prefix(shift(s), n).symbols == prefix(s, n + 1).symbols[1:]
