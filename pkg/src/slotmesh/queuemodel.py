"""Slot-aware finite-queue Markov model of a single node.

The queue of a node is a discrete-time Markov chain over states ``(q, i)``
where ``q`` is the number of queued packets at the beginning of slot ``i``
of the slotframe. Per slot, packets arrive as a Poisson stream plus at
most one forwarded packet (Bernoulli); at most ``K - q`` arrivals are
accepted, and one packet leaves at the end of a transmission slot if the
queue was non-empty at its beginning. The stationary distribution yields
per-slot transmission probabilities, the packet acceptance probability,
queue-level marginals and the expected queuing delay.

For a slotframe of length one with a single transmission slot the chain
reduces exactly to an M/D/1/K queue.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy import stats

from . import stationary

VARIANTS = ("md1k", "distributed", "full")


class ModelError(ValueError):
    """Raised for invalid model inputs or undefined metrics."""


@dataclass(frozen=True)
class TrafficSpec:
    """Per-slot arrival process: Poisson rate plus Bernoulli forwarding
    probability, one pair per slot of the slotframe."""

    poisson_rate: tuple[float, ...]
    bernoulli_prob: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "poisson_rate", tuple(float(x) for x in self.poisson_rate))
        object.__setattr__(self, "bernoulli_prob", tuple(float(x) for x in self.bernoulli_prob))
        if len(self.poisson_rate) != len(self.bernoulli_prob) or not self.poisson_rate:
            raise ModelError("poisson_rate and bernoulli_prob must have equal, "
                             "non-zero length")
        for lam in self.poisson_rate:
            if not math.isfinite(lam) or lam < 0:
                raise ModelError(f"invalid Poisson rate {lam}")
        for p in self.bernoulli_prob:
            if not 0.0 <= p <= 1.0:
                raise ModelError(f"invalid Bernoulli probability {p}")

    @classmethod
    def constant(cls, length: int, rate: float = 0.0, prob: float = 0.0):
        return cls((rate,) * length, (prob,) * length)

    @property
    def slots(self) -> int:
        return len(self.poisson_rate)


def arrival_pmf(traffic: TrafficSpec, slot: int, k: int) -> float:
    """Probability of exactly ``k`` packets arriving during ``slot``."""
    if k < 0:
        raise ModelError("k must be non-negative")
    lam = traffic.poisson_rate[slot]
    p = traffic.bernoulli_prob[slot]
    if k == 0:
        return float((1.0 - p) * stats.poisson.pmf(0, lam))
    return float((1.0 - p) * stats.poisson.pmf(k, lam)
                 + p * stats.poisson.pmf(k - 1, lam))


def arrival_tail(traffic: TrafficSpec, slot: int, k: int) -> float:
    """Probability of at least ``k`` packets arriving during ``slot``."""
    if k < 0:
        raise ModelError("k must be non-negative")
    if k == 0:
        return 1.0
    lam = traffic.poisson_rate[slot]
    p = traffic.bernoulli_prob[slot]
    # sf(k - 1) is P[Y >= k] for the Poisson part
    return float((1.0 - p) * stats.poisson.sf(k - 1, lam)
                 + p * stats.poisson.sf(k - 2, lam))


def expected_arrivals_per_slotframe(traffic: TrafficSpec) -> float:
    """Expected number of packets offered to the queue per slotframe."""
    return math.fsum(
        (1.0 - p) * lam + p * (lam + 1.0)
        for lam, p in zip(traffic.poisson_rate, traffic.bernoulli_prob))


@dataclass(frozen=True)
class QueueChain:
    """Sparse transition matrix over the ``(K + 1) * S`` states ``(q, i)``,
    flattened as ``j = q * S + i``."""

    capacity: int
    slotframe_length: int
    tx_slots: tuple[int, ...]
    transition_matrix: sparse.csr_matrix
    traffic: TrafficSpec

    @property
    def n_states(self) -> int:
        return (self.capacity + 1) * self.slotframe_length

    def state_index(self, q: int, i: int) -> int:
        return q * self.slotframe_length + i

    def tx_indicator(self, slot: int) -> int:
        return 1 if slot in set(self.tx_slots) else 0


def _queueing_row(pmf_i, q, capacity):
    """Probabilities of inserting k = 0..K-q packets given state (q, i);
    the last entry absorbs the tail so every row sums to one exactly."""
    room = capacity - q
    probs = list(pmf_i[:room])
    tail = max(0.0, 1.0 - math.fsum(probs))
    probs.append(tail)
    return probs


def build_chain(capacity: int, slotframe_length: int, tx_slots,
                traffic: TrafficSpec) -> QueueChain:
    """Construct the queue chain for one node.

    From state ``(q, i)`` and ``k`` accepted arrivals, the chain moves to
    ``(max(q - tau_i, 0) + k, (i + 1) % S)`` where ``tau_i`` is one on
    transmission slots. For ``q = K`` nothing can be accepted, leaving a
    single transition of probability one.
    """
    if capacity < 1:
        raise ModelError("capacity must be at least 1")
    if slotframe_length < 1:
        raise ModelError("slotframe_length must be at least 1")
    tx = tuple(sorted(set(tx_slots)))
    for s in tx:
        if not 0 <= s < slotframe_length:
            raise ModelError(f"tx slot {s} outside [0, {slotframe_length})")
    if traffic.slots != slotframe_length:
        raise ModelError("traffic spec length must equal the slotframe length")
    tx_set = set(tx)
    length = slotframe_length
    rows, cols, vals = [], [], []
    for i in range(length):
        pmf_i = [arrival_pmf(traffic, i, k) for k in range(capacity + 1)]
        nxt = (i + 1) % length
        tau = 1 if i in tx_set else 0
        for q in range(capacity + 1):
            src = q * length + i
            base = max(q - tau, 0)
            for k, pk in enumerate(_queueing_row(pmf_i, q, capacity)):
                if pk > 0.0:
                    rows.append(src)
                    cols.append((base + k) * length + nxt)
                    vals.append(pk)
    n = (capacity + 1) * length
    matrix = sparse.csr_matrix(
        (vals, (rows, cols)), shape=(n, n), dtype=float)
    return QueueChain(capacity=capacity, slotframe_length=length,
                      tx_slots=tx, transition_matrix=matrix, traffic=traffic)


def transmission_probability(chain: QueueChain, distribution: np.ndarray) -> np.ndarray:
    """Per-slot probability of a successful transmission: on a transmission
    slot, the complementary probability of an empty queue."""
    grid = np.asarray(distribution).reshape(chain.capacity + 1,
                                            chain.slotframe_length)
    column_mass = grid.sum(axis=0)
    tx = np.zeros(chain.slotframe_length)
    for i in chain.tx_slots:
        if column_mass[i] <= 0.0:
            raise ModelError(f"transmission slot {i} carries no stationary mass")
        tx[i] = 1.0 - grid[0, i] / column_mass[i]
    return tx


def _expected_accepted(traffic, slot, q, capacity, pmf_i=None):
    # E[accepted | (q, i)]: the tail mass is capped at the remaining room.
    room = capacity - q
    if room == 0:
        return 0.0
    if pmf_i is None:
        pmf_i = [arrival_pmf(traffic, slot, k) for k in range(room)]
    head = math.fsum(k * pmf_i[k] for k in range(room))
    tail = max(0.0, 1.0 - math.fsum(pmf_i[:room]))
    return head + tail * room


def acceptance_probability(chain: QueueChain, distribution: np.ndarray) -> float:
    """Overall fraction of offered packets accepted into the queue."""
    offered = expected_arrivals_per_slotframe(chain.traffic)
    if offered <= 0.0:
        raise ModelError("no offered traffic; acceptance probability undefined")
    length = chain.slotframe_length
    grid = np.asarray(distribution).reshape(chain.capacity + 1, length)
    accepted = 0.0
    for i in range(length):
        pmf_i = [arrival_pmf(chain.traffic, i, k) for k in range(chain.capacity + 1)]
        for q in range(chain.capacity + 1):
            if grid[q, i] > 0.0:
                accepted += grid[q, i] * _expected_accepted(
                    chain.traffic, i, q, chain.capacity, pmf_i)
    return length * accepted / offered


def queue_marginals(distribution: np.ndarray, slotframe_length: int) -> np.ndarray:
    """Probability of holding q packets, summed over the slot position."""
    grid = np.asarray(distribution).reshape(-1, slotframe_length)
    return grid.sum(axis=1)


def _slots_between(i: int, j: int, length: int) -> int:
    return j - i if j >= i else j - i + length


def _preceding_tx_index(tx_slots, i: int) -> int:
    # index of the transmission slot preceding slot i (cyclically); ties at
    # i == t_g belong to the previous index (strict lower bound)
    if i <= tx_slots[0] or i > tx_slots[-1]:
        return len(tx_slots) - 1
    return bisect_left(tx_slots, i) - 1


def _state_delay(tx_slots, length, q, i):
    # waiting time of a packet that sits at queue position q at slot i:
    # full slotframe iterations plus the distance to its transmission slot,
    # plus one for the transmission slot itself
    count = len(tx_slots)
    frames = -(-q // count) - 1  # ceil(q / count) - 1
    target = tx_slots[(_preceding_tx_index(tx_slots, i) + q) % count]
    return frames * length + 1 + _slots_between(i, target, length)


def expected_delay(chain: QueueChain, distribution: np.ndarray) -> float:
    """Expected queuing delay in slots for an arriving packet.

    Averages the deterministic drain time over the state reached after the
    arrival itself is appended to the queue.
    """
    if not chain.tx_slots:
        raise ModelError("node never transmits; delay undefined")
    length = chain.slotframe_length
    grid = np.asarray(distribution).reshape(chain.capacity + 1, length)
    total = 0.0
    for i in range(length):
        tau = chain.tx_indicator(i)
        nxt = (i + 1) % length
        for q in range(chain.capacity + 1):
            if grid[q, i] > 0.0:
                g = max(q - tau, 0) + 1
                total += grid[q, i] * _state_delay(chain.tx_slots, length, g, nxt)
    return total


@dataclass(frozen=True)
class NodeMetrics:
    """Stationary metrics of one node's queue.

    ``distribution`` is ``None`` for nodes that are not modeled by a chain
    (the sink consumes packets immediately).
    """

    distribution: np.ndarray | None
    tx_probability: np.ndarray
    acceptance: float
    expected_delay_slots: float
    queue_marginals: np.ndarray
    total_arrivals: float


def evaluate_node(capacity: int, slotframe_length: int, tx_slots,
                  traffic: TrafficSpec, *, tolerance: float = 1e-10,
                  max_iters: int = stationary.DEFAULT_MAX_ITERS,
                  method: str = "auto") -> NodeMetrics:
    """Build, solve and summarize the queue chain of one node.

    Nodes without offered traffic are defined to accept everything
    (vacuously); the chain is still solved for the delay and transmission
    figures of the empty system.
    """
    chain = build_chain(capacity, slotframe_length, tx_slots, traffic)
    result = stationary.solve(chain, tolerance=tolerance, max_iters=max_iters,
                              method=method)
    c = result.distribution
    offered = expected_arrivals_per_slotframe(traffic)
    if offered > 0.0:
        paccept = acceptance_probability(chain, c)
        if not -1e-9 <= paccept <= 1.0 + 1e-9:
            raise ModelError(f"acceptance probability {paccept} outside [0, 1]")
        paccept = min(max(paccept, 0.0), 1.0)
    else:
        paccept = 1.0
    return NodeMetrics(
        distribution=c,
        tx_probability=transmission_probability(chain, c),
        acceptance=paccept,
        expected_delay_slots=expected_delay(chain, c) if chain.tx_slots else 0.0,
        queue_marginals=queue_marginals(c, slotframe_length),
        total_arrivals=offered,
    )


def model_variant(variant: str, capacity: int, slotframe_length: int,
                  tx_slots, traffic: TrafficSpec, **solver_options) -> NodeMetrics:
    """Evaluate a node under one of the model variants.

    ``full`` uses the slot-resolved traffic as given. ``distributed`` keeps
    the real transmission slots but spreads the same total load uniformly
    over all slots as pure Poisson traffic. ``md1k`` additionally collapses
    the slotframe to a single transmission slot, so one model step
    corresponds to a whole slotframe of the original schedule.
    """
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r} (expected one of {VARIANTS})")
    if variant == "full":
        return evaluate_node(capacity, slotframe_length, tx_slots, traffic,
                             **solver_options)
    offered = expected_arrivals_per_slotframe(traffic)
    if variant == "distributed":
        uniform = TrafficSpec.constant(slotframe_length,
                                       rate=offered / slotframe_length)
        return evaluate_node(capacity, slotframe_length, tx_slots, uniform,
                             **solver_options)
    return evaluate_node(capacity, 1, (0,), TrafficSpec((offered,), (0.0,)),
                         **solver_options)
