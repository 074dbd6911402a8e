"""The allocation MDP as pure state-transition functions.

States wrap a :class:`JobAllocationGraph`; an action is any selection edge;
taking it earns reward 1 and removes the edges it rules out.  An episode ends
when no selection edges remain.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import (
    BIDIRECTIONAL,
    ActionNotAvailable,
    Allocation,
    Assignment,
    InvalidGraph,
    JobAllocationGraph,
    apply_assignment,
)

REWARD = 1.0


class PolicyReturnedUnavailableAction(ActionNotAvailable):
    pass


@dataclass(frozen=True)
class EnvState:
    graph: JobAllocationGraph
    initial: JobAllocationGraph
    chosen: tuple = ()

    @property
    def steps_taken(self):
        return len(self.chosen)

    @property
    def done(self):
        return self.graph.is_terminal

    @property
    def actions(self):
        return self.graph.actions

    def allocation(self):
        return Allocation.from_pairs(self.chosen, self.initial)


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    done: bool


def reset(g: JobAllocationGraph) -> EnvState:
    if not isinstance(g, JobAllocationGraph):
        raise InvalidGraph([f"expected JobAllocationGraph, got {type(g).__name__}"])
    return EnvState(graph=g, initial=g)


def step(state: EnvState, action, mode=BIDIRECTIONAL) -> StepOutcome:
    a = Assignment(int(action[0]), int(action[1]))
    nxt = apply_assignment(state.graph, a, mode)
    new_state = EnvState(graph=nxt, initial=state.initial, chosen=state.chosen + (a,))
    return StepOutcome(new_state, REWARD, nxt.is_terminal)


def rollout(g: JobAllocationGraph, policy, mode=BIDIRECTIONAL, trace=None):
    """Run ``policy`` (state -> assignment) to the end of the episode.

    Returns ``(allocation, total_reward)``.  When ``trace`` is a list, one
    ``(step, person, job, |S| after)`` tuple per step is appended to it.
    """
    state = reset(g)
    total = 0.0
    while not state.done:
        a = policy(state)
        try:
            out = step(state, a, mode)
        except ActionNotAvailable as exc:
            raise PolicyReturnedUnavailableAction(str(exc)) from exc
        total += out.reward
        state = out.next_state
        if trace is not None:
            trace.append((state.steps_taken - 1, int(a[0]), int(a[1]), len(state.graph.selection)))
    return state.allocation(), total


def discounted_return(rewards, gamma=1.0):
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


TRACE_HEADER = "# step person job remaining_selection_edges"


def format_trace(trace):
    lines = [TRACE_HEADER] + [f"{t} {p} {j} {n}" for t, p, j, n in trace]
    return "\n".join(lines) + "\n"


def parse_trace(text):
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(tuple(int(x) for x in line.split()))
    return rows
