"""Greedy average-AMI consensus over the feature partitions.

The base labelling starts from the heuristic grouping. Each sweep visits IPs
in ascending numeric order and moves an IP to whichever label (an existing
cluster, a fresh cluster, or NOISE) most increases the mean AMI between the
base and the inputs. Sweeps repeat until nothing moves.

Candidate scores are computed incrementally from contingency statistics; the
objective of every applied move is then recomputed from scratch and checked
to have strictly increased.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .algorithms import NOISE, Partition, ami, sort_items
from .algorithms.ami import ami_from_labels, emi_row_table, noise_as_singletons

logger = logging.getLogger(__name__)

FRESH = -2
DEFAULT_TOL = 1e-10


class ConsensusInvariantError(AssertionError):
    """The objective failed to increase on an applied move."""


# --- AMI table --------------------------------------------------------------


@dataclass(frozen=True)
class AmiTable:
    names: tuple[str, ...]
    matrix: np.ndarray  # NaN where overlap is too small

    @property
    def averages(self) -> dict[str, float | None]:
        out = {}
        for i, name in enumerate(self.names):
            row = np.delete(self.matrix[i], i)
            row = row[~np.isnan(row)]
            out[name] = float(row.mean()) if row.size else None
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", *self.names, "average"])
        avgs = self.averages
        for i, name in enumerate(self.names):
            cells = ["" if np.isnan(v) else f"{v:.6f}" for v in self.matrix[i]]
            avg = avgs[name]
            writer.writerow([name, *cells, "" if avg is None else f"{avg:.6f}"])
        return buf.getvalue()


def ami_table(inputs: Mapping[str, Partition]) -> AmiTable:
    """Pairwise AMI between partitions, unit diagonal, NaN for missing pairs."""
    if len(inputs) < 2:
        raise ValueError("ami_table needs at least two partitions")
    names = tuple(inputs)
    m = len(names)
    mat = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            v = ami(inputs[names[i]], inputs[names[j]])
            mat[i, j] = mat[j, i] = np.nan if v is None else v
    return AmiTable(names, mat)


# --- incremental engine -----------------------------------------------------


def _xlogx(n: int) -> np.ndarray:
    k = np.arange(n + 2, dtype=np.float64)
    out = np.zeros_like(k)
    out[1:] = k[1:] * np.log(k[1:])
    return out


def _ami_value(n, s_cells, s_rows, s_cols, emi, n_rows, n_cells, n_cols) -> float:
    if n_rows == n_cells == n_cols:
        return 1.0  # same grouping
    log_n = math.log(n)
    mi = log_n + (s_cells - s_rows - s_cols) / n
    h_rows = log_n - s_rows / n
    h_cols = log_n - s_cols / n
    denom = 0.5 * (h_rows + h_cols) - emi
    eps = np.finfo(np.float64).eps
    if abs(denom) < eps:
        denom = math.copysign(eps, denom)
    return (mi - emi) / denom


class _InputStats:
    """Contingency statistics of one input against the restricted base."""

    def __init__(self, name: str, positions: np.ndarray, cols: np.ndarray, base: np.ndarray):
        self.name = name
        self.positions = positions
        self.n = len(positions)
        self.cols = cols
        col_sizes = np.bincount(cols)
        self.n_cols = len(col_sizes)
        self.F = _xlogx(self.n)
        self.s_cols = float(self.F[col_sizes].sum())
        table = emi_row_table(col_sizes, self.n, range(1, self.n + 1))
        self.g = np.zeros(self.n + 2)
        for a, v in table.items():
            self.g[a] = v
        self.rebuild(base)

    def rebuild(self, base: np.ndarray) -> None:
        self.rows: dict[int, int] = {}
        self.cells: dict[tuple[int, int], int] = {}
        self.noise = 0
        for pos, c in zip(self.positions, self.cols):
            lab = int(base[pos])
            if lab == NOISE:
                self.noise += 1
                continue
            self.rows[lab] = self.rows.get(lab, 0) + 1
            self.cells[(lab, int(c))] = self.cells.get((lab, int(c)), 0) + 1
        F, g = self.F, self.g
        self.s_rows = float(sum(F[a] for a in self.rows.values()))
        self.s_cells = float(sum(F[k] for k in self.cells.values()))
        self.emi = float(sum(g[a] for a in self.rows.values()) + self.noise * g[1])

    def value(self) -> float:
        return _ami_value(
            self.n,
            self.s_cells,
            self.s_rows,
            self.s_cols,
            self.emi,
            len(self.rows) + self.noise,
            len(self.cells) + self.noise,
            self.n_cols,
        )

    def value_after(self, c: int, old: int, new: int) -> float:
        """AMI if one member in column ``c`` moved from label ``old`` to ``new``."""
        F, g = self.F, self.g
        s_cells, s_rows, emi = self.s_cells, self.s_rows, self.emi
        n_rows = len(self.rows) + self.noise
        n_cells = len(self.cells) + self.noise
        if old == NOISE:
            n_rows -= 1
            n_cells -= 1
            emi -= g[1]
        else:
            a = self.rows[old]
            s_rows += F[a - 1] - F[a]
            emi += g[a - 1] - g[a]
            n_rows -= a == 1
            k = self.cells[(old, c)]
            s_cells += F[k - 1] - F[k]
            n_cells -= k == 1
        if new in (NOISE, FRESH):
            n_rows += 1
            n_cells += 1
            emi += g[1]
        else:
            a = self.rows.get(new, 0)
            s_rows += F[a + 1] - F[a]
            emi += g[a + 1] - g[a]
            n_rows += a == 0
            k = self.cells.get((new, c), 0)
            s_cells += F[k + 1] - F[k]
            n_cells += k == 0
        return _ami_value(self.n, s_cells, s_rows, self.s_cols, emi, n_rows, n_cells, self.n_cols)

    def exact(self, base: np.ndarray) -> float:
        return ami_from_labels(base[self.positions], self.cols)


def _degenerate(p: Partition) -> str | None:
    if len(p) < 2:
        return "fewer than two IPs"
    cols = noise_as_singletons(p.label_array)
    k = len(np.unique(cols))
    if k == len(p):
        return "every IP is its own cluster"
    if k == 1:
        return "a single cluster"
    return None


@dataclass(frozen=True)
class Move:
    ip: str
    old_label: int
    new_label: int
    objective_delta: float

    def to_dict(self) -> dict:
        return {
            "ip": self.ip,
            "old_label": self.old_label,
            "new_label": self.new_label,
            "objective_delta": self.objective_delta,
        }


@dataclass
class ConsensusState:
    universe: tuple[str, ...]
    labels: np.ndarray  # working base labels, aligned with universe
    inputs: dict[str, Partition]
    excluded: dict[str, str] = field(default_factory=dict)
    objective: float = 0.0
    sweep_count: int = 0
    moves_log: list[Move] = field(default_factory=list)
    trajectory: list[float] = field(default_factory=list)
    tol: float = DEFAULT_TOL
    converged: bool = False
    _stats: list[_InputStats] = field(default_factory=list, repr=False)
    _member_of: list[list[tuple[int, int]]] = field(default_factory=list, repr=False)
    _values: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def base(self) -> Partition:
        return Partition.from_labels(self.universe, self.labels, "consensus")

    @property
    def active_inputs(self) -> list[str]:
        return [s.name for s in self._stats]

    def recompute_objective(self) -> float:
        if not self._stats:
            return 0.0
        return float(np.mean([s.exact(self.labels) for s in self._stats]))

    def ami_matrix(self) -> AmiTable:
        return ami_table({**self.inputs, "consensus": self.base})

    def moves_jsonl(self) -> str:
        return "".join(json.dumps(m.to_dict(), sort_keys=True) + "\n" for m in self.moves_log)


def init_state(
    inputs: Mapping[str, Partition],
    start: Partition,
    universe: Iterable[str] | None = None,
    tol: float = DEFAULT_TOL,
) -> ConsensusState:
    """Base = ``start`` labels on its universe, NOISE elsewhere."""
    if universe is None:
        universe = {ip for p in inputs.values() for ip in p.universe} | set(start.universe)
    universe = tuple(sort_items(universe))
    pos = {ip: i for i, ip in enumerate(universe)}
    labels = np.full(len(universe), NOISE, dtype=np.int64)
    for ip in start.universe:
        if ip in pos:
            labels[pos[ip]] = start.labels[ip]
    state = ConsensusState(universe, labels, dict(inputs), tol=tol)
    state._member_of = [[] for _ in universe]
    for name, part in inputs.items():
        reason = _degenerate(part.restricted(universe))
        if reason:
            state.excluded[name] = reason
            logger.info("consensus: input %s left out of the objective (%s)", name, reason)
            continue
        p = part.restricted(universe).canonical()
        positions = np.array([pos[ip] for ip in p.universe], dtype=np.int64)
        cols = noise_as_singletons(p.label_array)
        _, cols = np.unique(cols, return_inverse=True)
        k = len(state._stats)
        state._stats.append(_InputStats(name, positions, cols.astype(np.int64), labels))
        for x, c in zip(positions, cols):
            state._member_of[int(x)].append((k, int(c)))
    state._values = np.array([s.exact(labels) for s in state._stats])
    state.objective = float(state._values.mean()) if state._stats else 0.0
    state.trajectory.append(state.objective)
    return state


def _candidates(labels: np.ndarray, current: int) -> list[int]:
    existing = np.unique(labels[labels >= 0]).tolist()
    return [lab for lab in existing if lab != current] + [FRESH] + ([NOISE] if current != NOISE else [])


def consensus_sweep(state: ConsensusState, ip_order: Sequence[int] | None = None) -> int:
    """One pass over the IPs; returns how many changed label."""
    m = len(state._stats)
    if m == 0:
        return 0
    order = range(len(state.universe)) if ip_order is None else ip_order
    changed = 0
    for x in order:
        memberships = state._member_of[x]
        if not memberships:
            continue
        current = int(state.labels[x])
        cur_sum = sum(state._values[k] for k, _ in memberships)
        best_delta, best_label, best_vals = 0.0, None, None
        for cand in _candidates(state.labels, current):
            if cand == FRESH and current != NOISE and np.count_nonzero(state.labels == current) == 1:
                continue  # already alone in its cluster
            vals = [state._stats[k].value_after(c, current, cand) for k, c in memberships]
            delta = (sum(vals) - cur_sum) / m
            if delta > best_delta:
                best_delta, best_label, best_vals = delta, cand, vals
        if best_label is None or best_delta <= state.tol:
            continue
        new = int(state.labels.max()) + 1 if best_label == FRESH else best_label
        _apply(state, x, current, new, best_delta)
        changed += 1
    state.sweep_count += 1
    state.trajectory.append(state.objective)
    return changed


def _apply(state: ConsensusState, x: int, old: int, new: int, predicted: float) -> None:
    before = state.objective
    state.labels[x] = new
    for k, _ in state._member_of[x]:
        st = state._stats[k]
        st.rebuild(state.labels)
        state._values[k] = st.exact(state.labels)
    after = float(state._values.mean())
    delta = after - before
    if not delta > 0:
        raise ConsensusInvariantError(
            f"objective did not increase moving {state.universe[x]} {old}->{new}: "
            f"{before!r} -> {after!r} (predicted {predicted!r})"
        )
    if abs(delta - predicted) > 1e-9:
        logger.warning("incremental delta %.3g differs from exact %.3g", predicted, delta)
    state.objective = after
    state.moves_log.append(Move(state.universe[x], old, new, delta))


def finalize(state: ConsensusState) -> Partition:
    """Compact labels; clusters of one IP become NOISE (same AMI either way)."""
    labels = state.labels.copy()
    counts = {lab: n for lab, n in zip(*np.unique(labels[labels >= 0], return_counts=True))}
    for i, lab in enumerate(labels):
        if lab >= 0 and counts[lab] == 1:
            labels[i] = NOISE
    return Partition.from_labels(state.universe, labels, "consensus")


def run_consensus(
    inputs: Mapping[str, Partition],
    heuristic: Partition | None = None,
    universe: Iterable[str] | None = None,
    max_sweeps: int = 50,
    tol: float = DEFAULT_TOL,
) -> tuple[Partition, ConsensusState]:
    """Sweep until no IP changes label (or ``max_sweeps``); return the final partition."""
    if heuristic is None:
        heuristic = inputs.get("heuristic", Partition.empty())
    state = init_state(inputs, heuristic, universe, tol)
    if not state.universe:
        return Partition.empty("consensus"), state
    while state.sweep_count < max_sweeps:
        changed = consensus_sweep(state)
        logger.info(
            "consensus sweep %d: %d moves, objective %.6f", state.sweep_count, changed, state.objective
        )
        if changed == 0:
            state.converged = True
            break
    else:
        logger.warning("consensus stopped at max_sweeps=%d before converging", max_sweeps)
    recomputed = state.recompute_objective()
    if abs(recomputed - state.objective) > 1e-12:
        raise ConsensusInvariantError(f"tracked objective {state.objective!r} != recomputed {recomputed!r}")
    return finalize(state), state

