"""Pinned nine-test tree mapping and the 32-slot cycle it must produce."""
from probesched.tree import TreeMapping

# test k (1-based) -> (level, offset)
NINE_TEST_NODES = {
    1: (2, 0), 2: (2, 1), 3: (3, 2), 4: (3, 3),
    5: (4, 6), 6: (4, 14), 7: (4, 15), 8: (5, 7), 9: (5, 23),
}
NINE_TEST_FREQS = (1 / 4, 1 / 4, 1 / 8, 1 / 8, 1 / 16, 1 / 16, 1 / 16, 1 / 32, 1 / 32)
NINE_TEST_CYCLE = "1 2 3 4 1 2 5 8 1 2 3 4 1 2 6 7 1 2 3 4 1 2 5 9 1 2 3 4 1 2 6 7"


def nine_test_mapping() -> TreeMapping:
    nodes = [NINE_TEST_NODES[k] for k in range(1, 10)]
    return TreeMapping(tuple(l for l, _ in nodes), tuple(o for _, o in nodes))


def render(cycle) -> str:
    return " ".join("x" if c < 0 else str(c + 1) for c in cycle)
