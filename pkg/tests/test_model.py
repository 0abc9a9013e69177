import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from popeig.errors import (
    DuplicateEigenvalue,
    InputError,
    MultiplicitySumMismatch,
    NonPositiveEigenvalue,
    SampleCountTooSmall,
)
from popeig.model import PopulationModel, load_model, make_model, validate_model


def test_base_model_valid():
    m = validate_model({"rhos": [1, 3, 10], "mults": [20, 20, 20], "N": 60, "M": 600})
    assert m.c == pytest.approx(0.1)
    assert m.n_clusters == 3
    assert list(m.c_k) == pytest.approx([1 / 30] * 3)
    assert list(m.diagonal()[[0, 20, 40]]) == [1, 3, 10]


def test_duplicate_rejected():
    with pytest.raises(DuplicateEigenvalue):
        validate_model({"rhos": [1, 1], "mults": [10, 10], "N": 20, "M": 200})


def test_too_few_samples():
    with pytest.raises(SampleCountTooSmall):
        validate_model({"rhos": [1, 3], "mults": [30, 30], "N": 60, "M": 50})
    with pytest.raises(SampleCountTooSmall):
        validate_model({"rhos": [1, 3], "mults": [30, 30], "N": 60, "M": 60})


@pytest.mark.parametrize(
    "raw, exc",
    [
        ({"rhos": [0, 3], "mults": [1, 1], "N": 2, "M": 5}, NonPositiveEigenvalue),
        ({"rhos": [-1, 3], "mults": [1, 1], "N": 2, "M": 5}, NonPositiveEigenvalue),
        ({"rhos": [1, 3], "mults": [1, 1], "N": 3, "M": 5}, MultiplicitySumMismatch),
        ({"rhos": [1, 3], "mults": [0, 2], "N": 2, "M": 5}, MultiplicitySumMismatch),
        ({"rhos": [1, 3], "mults": [1], "N": 1, "M": 5}, InputError),
        ({"rhos": [1], "mults": [1], "M": 5}, InputError),
    ],
)
def test_invalid_models(raw, exc):
    with pytest.raises(exc):
        validate_model(raw)


def test_unsorted_input_sorted_jointly():
    m = validate_model({"rhos": [10, 1, 3], "mults": [5, 7, 9], "N": 21, "M": 100})
    assert m.rhos == (1.0, 3.0, 10.0)
    assert m.mults == (7, 9, 5)


def test_full_rank_can_be_waived():
    m = make_model([1, 1.05], [60, 60], 120, require_full_rank=False)
    assert m.c == 1.0


def test_json_round_trip(tmp_path, base):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(base.to_json()))
    assert load_model(path) == base
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        load_model(bad)


def test_scaled_and_with_samples(base):
    big = base.scaled(2)
    assert (big.n_dim, big.m_samples, big.mults) == (120, 1200, (40, 40, 40))
    assert big.c == base.c
    assert base.with_samples(6000).c == pytest.approx(0.01)


pairs = st.lists(
    st.tuples(st.floats(0.01, 100, allow_nan=False), st.integers(1, 20)),
    min_size=1,
    max_size=6,
    unique_by=lambda p: p[0],
)


@given(pairs, st.integers(1, 50))
def test_validation_idempotent_and_pair_preserving(ps, extra):
    rhos, mults = zip(*ps)
    n = sum(mults)
    m = validate_model({"rhos": rhos, "mults": mults, "N": n, "M": n + extra})
    assert isinstance(m, PopulationModel)
    assert validate_model(m) == m
    assert sorted(zip(m.rhos, m.mults)) == sorted((float(r), k) for r, k in ps)
    assert all(a < b for a, b in zip(m.rhos, m.rhos[1:]))
