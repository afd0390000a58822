import pytest

from blockcloud.err import NodeRankingProfile, TaskRankingProfile

# task ranking profiles: scores and weights per task
TASK_TABLE = {
    "task-1": ((100, 25, 5000, 5, 350, 50), (0.15, 0.15, 0.25, 0.25, 0.15, 0.05)),
    "task-i": ((50, 75, 250000, 8, 500, 75), (0.05, 0.25, 0.25, 0.25, 0.15, 0.05)),
    "task-N": ((75, 100, 100000, 3, 150, 25), (0.25, 0.15, 0.15, 0.15, 0.15, 0.15)),
}
TASK_NORMS = (100, 100, 1_000_000, 10, 1000, 100)
TASK_DISPLAYED = {"task-1": 0.39, "task-i": 0.59, "task-N": 0.46}

# node ranking profiles: scores and weights per node
NODE_TABLE = {
    "super-1": ((50, 50, 50), (0.50, 0.30, 0.20)),
    "computing-1": ((25, 60, 50), (0.70, 0.20, 0.10)),
    "service-1": ((35, 75, 85), (0.25, 0.30, 0.45)),
}
NODE_DISPLAYED = {"super-1": 0.50, "computing-1": 0.35, "service-1": 0.70}


@pytest.fixture
def task_profiles():
    return {k: TaskRankingProfile.from_columns(s, w, TASK_NORMS) for k, (s, w) in TASK_TABLE.items()}


@pytest.fixture
def node_profiles():
    return {k: NodeRankingProfile.from_columns(s, w, (100, 100, 100)) for k, (s, w) in NODE_TABLE.items()}
