import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_network
from oracles import eliminate_one, random_connected_laplacian, series_susceptance

from ghostrocof.grid_model import (CaseParseError, CaseSchemaError, CaseValidationError,
                                   GridCase, Branch, Generator, ReducedNetwork, ReductionError,
                                   build_weighted_laplacian, extract_reduced_lines, kron_reduce,
                                   load_case, load_machine_params, parse_matpower_case,
                                   reduce_case, IEEE39_CASE, IEEE39_MACHINES)

TWO_BUS = """
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 345 1 1.06 0.94;
    2 1 50 0 0 0 1 1 0 345 1 1.06 0.94;
];
mpc.gen = [
    1 100 0 300 -300 1 100 1 250 10;
];
mpc.branch = [
    1 2 0.01 0.5 0 0 0 0 0 0 1 -360 360;
];
"""


def test_parse_two_bus():
    case = parse_matpower_case(TWO_BUS)
    assert case.buses == (1, 2)
    assert len(case.branches) == 1
    assert case.branches[0].susceptance == pytest.approx(2.0)
    assert case.generators[0].p_nom == 100
    assert case.generators[0].label == "G1"
    assert case.base_mva == 100


def test_out_of_service_branch_dropped():
    text = TWO_BUS.replace("];\n\"\"\"", "").replace(
        "1 2 0.01 0.5 0 0 0 0 0 0 1 -360 360;",
        "1 2 0.01 0.5 0 0 0 0 0 0 1 -360 360;\n    1 2 0.01 0.25 0 0 0 0 0 0 0 -360 360;")
    case = parse_matpower_case(text)
    assert len(case.branches) == 1


def test_empty_branch_table_is_schema_error():
    text = TWO_BUS.replace("1 2 0.01 0.5 0 0 0 0 0 0 1 -360 360;", "")
    with pytest.raises(CaseSchemaError):
        parse_matpower_case(text)


def test_missing_gen_table():
    text = TWO_BUS.replace("mpc.gen", "mpc.gencost")
    with pytest.raises(CaseSchemaError):
        parse_matpower_case(text)


def test_malformed_block_reports_line():
    text = TWO_BUS.replace("2 1 50 0", "2 1 fifty 0")
    with pytest.raises(CaseParseError) as err:
        parse_matpower_case(text)
    assert err.value.line == 6
    assert "line 6" in str(err.value)


def test_duplicate_bus_is_validation_error():
    text = TWO_BUS.replace("2 1 50 0", "1 1 50 0")
    with pytest.raises(CaseValidationError, match="duplicate bus id 1"):
        parse_matpower_case(text)


def test_case_invariants():
    with pytest.raises(CaseValidationError):
        GridCase((1, 2), (Branch(1, 3, 1.0),), (Generator(1, 10, "G1"),))
    with pytest.raises(CaseValidationError):
        GridCase((1, 2), (Branch(1, 2, -1.0),), (Generator(1, 10, "G1"),))
    with pytest.raises(CaseValidationError):
        GridCase((1, 2), (Branch(1, 2, 1.0),), ())
    with pytest.raises(CaseValidationError):
        GridCase((1, 2), (Branch(1, 2, 1.0),), (Generator(1, 10, "G1", inertia=0.0, damping=1),))


def test_ieee39_counts():
    case = load_case(IEEE39_CASE)
    assert len(case.buses) == 39
    assert len(case.branches) == 46
    assert len(case.generators) == 10
    assert [g.bus for g in case.generators] == list(range(30, 40))


def test_laplacian_examples():
    case = GridCase((1, 2), (Branch(1, 2, 2.0),), (Generator(1, 1, "G1"),))
    np.testing.assert_array_equal(build_weighted_laplacian(case), [[2, -2], [-2, 2]])
    path = GridCase((1, 2, 3), (Branch(1, 2, 1.0), Branch(2, 3, 1.0)), (Generator(1, 1, "G1"),))
    np.testing.assert_array_equal(build_weighted_laplacian(path),
                                  [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    par = GridCase((1, 2), (Branch(1, 2, 1.0), Branch(1, 2, 3.0)), (Generator(1, 1, "G1"),))
    np.testing.assert_array_equal(build_weighted_laplacian(par), [[4, -4], [-4, 4]])


def test_kron_path_middle_bus():
    L = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1.0]])
    np.testing.assert_allclose(kron_reduce(L, [0, 2]), [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_kron_keep_all_is_identity():
    L = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1.0]])
    np.testing.assert_array_equal(kron_reduce(L, [0, 1, 2]), L)


def test_kron_disconnected_component_named():
    # buses 2 and 3 form an island with no path to the kept buses 0, 1
    L = np.zeros((4, 4))
    for a, b in ((0, 1), (2, 3)):
        L[a, b] = L[b, a] = -1.0
    L[np.diag_indices(4)] = -L.sum(axis=1)
    with pytest.raises(ReductionError, match=r"\[2, 3\]"):
        kron_reduce(L, [0, 1])


def test_extract_lines():
    assert extract_reduced_lines(np.array([[0.5, -0.5], [-0.5, 0.5]])) == [(0, 1, 0.5)]
    assert extract_reduced_lines(np.array([[0.0]])) == []


def test_ieee39_reduction(ieee39):
    assert ieee39.n == 10
    assert ieee39.labels == tuple(f"G{i}" for i in range(1, 11))
    np.testing.assert_allclose(ieee39.L.sum(axis=1), 0, atol=1e-9)
    np.testing.assert_allclose(ieee39.L, ieee39.L.T, atol=0)
    assert len(extract_reduced_lines(ieee39.L)) == 45


def test_machine_file_roundtrip(tmp_path):
    params = load_machine_params(IEEE39_MACHINES)
    assert set(params) == {f"G{i}" for i in range(1, 11)}
    assert params["G10"]["M"] == pytest.approx(1000 / 60)
    bad = tmp_path / "m.yaml"
    bad.write_text("generators:\n  G1: {M: 1}\n")
    with pytest.raises(CaseSchemaError):
        load_machine_params(bad)


def test_missing_machine_params():
    case = parse_matpower_case(TWO_BUS)
    with pytest.raises(CaseSchemaError):
        case.with_machines({})
    with pytest.raises(CaseSchemaError):
        reduce_case(case)


def test_reduced_network_invariants():
    with pytest.raises(ValueError):
        make_network([[1, -1], [-1, 2]], 1.0, 1.0)  # row sums
    with pytest.raises(ValueError):
        make_network([[-1, 1], [1, -1]], 1.0, 1.0)  # positive off-diagonal
    with pytest.raises(ValueError):
        make_network([[1, -1], [-1, 1]], 0.0, 1.0)


def test_reduced_network_dict_roundtrip(ieee39):
    back = ReducedNetwork.from_dict(ieee39.to_dict())
    np.testing.assert_array_equal(back.L, ieee39.L)
    assert back.labels == ieee39.labels


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 50.0), min_size=2, max_size=6))
def test_series_chain_harmonic(bs):
    n = len(bs) + 1
    L = np.zeros((n, n))
    for k, b in enumerate(bs):
        L[k, k + 1] = L[k + 1, k] = -b
    L[np.diag_indices(n)] = -L.sum(axis=1)
    red = kron_reduce(L, [0, n - 1])
    assert -red[0, 1] == pytest.approx(series_susceptance(bs), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_kron_sequential_equals_batch(n, seed):
    rng = np.random.default_rng(seed)
    L = random_connected_laplacian(rng, n)
    n_keep = int(rng.integers(1, n))
    keep = sorted(rng.choice(n, n_keep, replace=False).tolist())
    batch = kron_reduce(L, keep)
    seq, labels = L.copy(), list(range(n))
    for bus in [b for b in range(n) if b not in keep]:
        k = labels.index(bus)
        seq = eliminate_one(seq, k)
        labels.pop(k)
    np.testing.assert_allclose(batch, seq, atol=1e-9 * max(1.0, np.abs(L).max()))
    np.testing.assert_allclose(batch.sum(axis=1), 0, atol=1e-9)
    assert np.all(batch - np.diag(np.diag(batch)) <= 1e-12)
