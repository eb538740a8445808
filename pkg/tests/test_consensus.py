import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeycluster import consensus
from honeycluster.algorithms import NOISE, Partition, ami
from honeycluster.consensus import (
    ConsensusInvariantError,
    ami_table,
    consensus_sweep,
    init_state,
    run_consensus,
)
from oracles import ami_reference

IPS = [f"192.0.2.{i}" for i in range(1, 41)]


def noisy_copies(truth, n_inputs, flip, seed, drop=0.0):
    rng = np.random.default_rng(seed)
    k = max(truth) + 1
    out = {}
    for m in range(n_inputs):
        keep = [i for i in range(len(truth)) if rng.random() >= drop]
        labels = [truth[i] if rng.random() >= flip else int(rng.integers(-1, k + 1)) for i in keep]
        out[f"m{m}"] = Partition.from_labels([IPS[i] for i in keep], labels, f"m{m}")
    return out


def objective_reference(base: Partition, inputs):
    """Mean AMI between the base and each input on the input's universe, via the oracle."""
    vals = []
    for p in inputs.values():
        shared = [ip for ip in p.universe if ip in base]
        vals.append(ami_reference([base.labels[ip] for ip in shared], [p.labels[ip] for ip in shared]))
    return float(np.mean(vals))


TRUTH = [i // 8 for i in range(40)]


def test_objective_matches_independent_reference():
    inputs = noisy_copies(TRUTH, 4, 0.2, 0, drop=0.1)
    state = init_state(inputs, inputs["m0"], IPS)
    assert state.objective == pytest.approx(objective_reference(state.base, inputs), abs=1e-10)
    consensus_sweep(state)
    assert state.objective == pytest.approx(objective_reference(state.base, inputs), abs=1e-10)


def test_run_is_monotone_and_improves_on_inputs():
    inputs = noisy_copies(TRUTH, 5, 0.25, 1)
    final, state = run_consensus(inputs, inputs["m0"])
    assert state.converged and state.sweep_count < 10
    assert all(m.objective_delta > 0 for m in state.moves_log)
    assert all(b >= a for a, b in zip(state.trajectory, state.trajectory[1:]))
    truth = Partition.from_labels(IPS, TRUTH)
    assert ami(final, truth) >= max(ami(p, truth) for p in inputs.values())


def test_fixed_point_idempotence():
    inputs = noisy_copies(TRUTH, 4, 0.3, 2)
    final, _ = run_consensus(inputs, inputs["m1"])
    again, state = run_consensus(inputs, final)
    assert state.moves_log == [] and state.sweep_count == 1
    assert again.same_clustering(final)


def test_identical_inputs_are_a_fixed_point():
    p = Partition.from_labels(IPS, TRUTH)
    inputs = {"a": p, "b": p, "c": p}
    final, state = run_consensus(inputs, p)
    assert state.moves_log == [] and state.objective == pytest.approx(1.0)
    assert final.same_clustering(p)


def test_degenerate_inputs_are_excluded():
    good = Partition.from_labels(IPS[:10], [0] * 5 + [1] * 5)
    inputs = {
        "good": good,
        "single": Partition.from_labels(IPS[:10], [0] * 10),
        "singletons": Partition.from_labels(IPS[:10], list(range(10))),
        "tiny": Partition.from_labels(IPS[:1], [0]),
        "all_noise": Partition.from_labels(IPS[:10], [NOISE] * 10),
    }
    _, state = run_consensus(inputs, good)
    assert state.active_inputs == ["good"]
    assert set(state.excluded) == {"single", "singletons", "tiny", "all_noise"}


def test_empty_inputs():
    final, state = run_consensus({"a": Partition.empty()}, Partition.empty())
    assert len(final) == 0


def test_singletons_end_as_noise():
    inputs = noisy_copies(TRUTH, 3, 0.4, 3)
    final, _ = run_consensus(inputs, inputs["m0"])
    sizes = {lab: n for lab, n in zip(*np.unique(final.label_array, return_counts=True))}
    assert all(n >= 2 for lab, n in sizes.items() if lab != NOISE)


def test_invariant_violation_is_raised(monkeypatch):
    p = Partition.from_labels(IPS, TRUTH)
    state = init_state({"a": p, "b": p}, p)
    # a lying incremental estimate proposes a move that really lowers the objective
    monkeypatch.setattr(consensus._InputStats, "value_after", lambda self, c, old, new: 10.0)
    with pytest.raises(ConsensusInvariantError):
        consensus_sweep(state)


def test_ami_table():
    p = Partition.from_labels(IPS[:6], [0, 0, 1, 1, 2, 2], "p")
    q = Partition.from_labels(IPS[:6], [0, 0, 0, 1, 1, 1], "q")
    table = ami_table({"p": p, "q": q})
    assert table.matrix[0, 0] == 1.0 and table.matrix[0, 1] == pytest.approx(ami(p, q))
    lines = table.to_csv().splitlines()
    assert lines[0] == "method,p,q,average"
    with pytest.raises(ValueError):
        ami_table({"p": p})


@settings(max_examples=25, deadline=None)
@given(
    st.integers(0, 10_000),
    st.integers(2, 5),
    st.floats(0.0, 0.6),
    st.floats(0.0, 0.3),
)
def test_consensus_properties(seed, n_inputs, flip, drop):
    truth = [i // 5 for i in range(25)]
    inputs = noisy_copies(truth, n_inputs, flip, seed, drop)
    start = next(iter(inputs.values()))
    final, state = run_consensus(inputs, start, max_sweeps=50)
    assert state.sweep_count <= 50
    assert all(m.objective_delta > 0 for m in state.moves_log)
    assert all(b >= a - 1e-15 for a, b in zip(state.trajectory, state.trajectory[1:]))
    assert state.recompute_objective() == pytest.approx(state.objective, abs=1e-12)
    if state.converged:
        _, again = run_consensus(inputs, final)
        assert again.moves_log == []
