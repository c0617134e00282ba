import pytest

from slotmesh.queuemodel import TrafficSpec
from slotmesh.schedule import Schedule, Topology


@pytest.fixture
def three_node_schedule():
    """The introductory example schedule: two nodes forward to a sink over
    three slots, node 1 transmitting twice."""
    return Schedule(
        node_count=3,
        slotframe_length=3,
        tx_slots=((), (0, 1), (2,)),
        rx_slots=((0, 1), (2,), ()),
        counterpart=({0: 1, 1: 1}, {0: 0, 1: 0, 2: 2}, {2: 1}),
        channel=({0: 11, 1: 11}, {0: 11, 1: 11, 2: 11}, {2: 11}),
    )


@pytest.fixture
def path_topology():
    """Chain 2 -> 1 -> 0."""
    return Topology(node_count=3, edges=frozenset({(0, 1), (1, 2)}),
                    parents=(None, 0, 1))


def chain_cases():
    """Shared inventory of single-node chains used by the solver tests."""
    cases = [
        # (capacity, slotframe_length, tx_slots, traffic)
        (3, 1, (0,), TrafficSpec((0.5,), (0.0,))),
        (8, 1, (0,), TrafficSpec((1.2,), (0.0,))),
        (2, 5, (1, 4), TrafficSpec.constant(5, rate=0.3)),
        (10, 5, (0,), TrafficSpec.constant(5, rate=0.2)),
        (10, 5, (0,), TrafficSpec.constant(5, prob=0.2)),
        (5, 5, (3,), TrafficSpec((0.1,) * 5, (0.5, 0.0, 0.0, 0.0, 0.0))),
        (1, 3, (1,), TrafficSpec((0.0, 0.0, 0.0), (0.5, 0.0, 0.0))),
        (4, 6, (1, 2, 5), TrafficSpec((0.05, 0.3, 0.0, 0.2, 0.1, 0.0),
                                      (0.3, 0.0, 0.6, 0.0, 0.0, 0.2))),
    ]
    return cases
