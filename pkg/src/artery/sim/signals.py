"""Dual-ring signal timing: interval construction and state queries."""

from __future__ import annotations

GREEN, YELLOW, RED = 0, 1, 2


def ring_intervals(plan, ring):
    """[(start, end, phase, state)] tiles over one cycle for a ring."""
    out = []
    t = 0.0
    for phase in ring:
        g = plan.greens[phase - 1]
        out.append((t, t + g, phase, GREEN))
        out.append((t + g, t + g + plan.yellow, phase, YELLOW))
        out.append((t + g + plan.yellow, t + g + plan.yellow + plan.all_red, phase, RED))
        t += g + plan.yellow + plan.all_red
    return out


class SignalSchedule:
    """Precomputed interval table for fast per-step queries."""

    def __init__(self, plan):
        plan.validate()
        self.plan = plan
        self.rings = (ring_intervals(plan, plan.ring1), ring_intervals(plan, plan.ring2))

    def state_at(self, t):
        """(green phases, yellow phases) as frozensets at absolute time t."""
        tloc = (t - self.plan.offset) % self.plan.cycle
        greens = []
        yellows = []
        for intervals in self.rings:
            for start, end, phase, state in intervals:
                if start <= tloc < end:
                    if state == GREEN and end > start:
                        greens.append(phase)
                    elif state == YELLOW:
                        yellows.append(phase)
                    break
        return frozenset(greens), frozenset(yellows)


def signal_state(plan, t):
    """Set of phases showing green at absolute time t."""
    return SignalSchedule(plan).state_at(t)[0]
