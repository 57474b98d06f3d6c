from fractions import Fraction

import pytest

from distcloud.oracle import is_max_min_fair, parse_flows, parse_links, water_fill_exact


def test_demand_capped_flow():
    assert water_fill_exact({"a": (("L",), 2), "b": (("L",), 9)}, {"L": 10}) == \
        {"a": 2, "b": 8}


def test_exact_thirds():
    alloc = water_fill_exact({f: (("L",), None) for f in "abc"}, {"L": 1})
    assert alloc == {f: Fraction(1, 3) for f in "abc"}


def test_chain_topology():
    # classic parking-lot: long flow shares both links
    flows = {"long": (("A", "B"), None), "a": (("A",), None), "b": (("B",), None)}
    assert water_fill_exact(flows, {"A": 6, "B": 10}) == {"long": 3, "a": 3, "b": 7}


def test_linkless_flow():
    assert water_fill_exact({"x": ((), 4), "y": ((), None)}, {}) == {"x": 4, "y": None}


def test_unknown_link():
    with pytest.raises(KeyError):
        water_fill_exact({"x": (("Z",), None)}, {"L": 1})


def test_characterisation_rejects_unfair():
    flows = {"a": (("L",), None), "b": (("L",), None)}
    assert is_max_min_fair(flows, {"L": 10}, {"a": 5, "b": 5}) is None
    assert is_max_min_fair(flows, {"L": 10}, {"a": 4, "b": 6}) is not None
    assert is_max_min_fair(flows, {"L": 10}, {"a": 4, "b": 4}) is not None
    assert is_max_min_fair(flows, {"L": 10}, {"a": 6, "b": 6}) == "link L over capacity"


def test_parsers():
    assert parse_links("A=10, B=2.5") == {"A": 10.0, "B": 2.5}
    assert parse_flows("f1=A+B@2,f2=A,f3=B@inf") == {
        "f1": (("A", "B"), 2.0), "f2": (("A",), None), "f3": (("B",), None)}
    with pytest.raises(ValueError):
        parse_links("A")
