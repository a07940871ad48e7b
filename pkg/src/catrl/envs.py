"""Seeded benchmark simulators behind one factored-state interface.

Each environment exposes `descriptor` (variable specs, actions, horizon
hint), `reset(rng) -> state` and `step(action, rng) -> StepResult`. Grid
coordinates are 1-based with y=1 at the north edge; the caller owns the rng,
so identical seeds replay identical trajectories.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .cat import INTEGER, REAL, VariableSpec

EAST, WEST, NORTH, SOUTH = 0, 1, 2, 3
PICKUP, DROPOFF = 4, 5

_MOVE = {EAST: (1, 0), WEST: (-1, 0), NORTH: (0, -1), SOUTH: (0, 1)}
# slipping moves perpendicular to the intended direction
_PERP = {EAST: (NORTH, SOUTH), WEST: (NORTH, SOUTH),
         NORTH: (EAST, WEST), SOUTH: (EAST, WEST)}


@dataclass(frozen=True)
class StepResult:
    next_state: tuple
    reward: float
    done: bool
    success: bool

    def __post_init__(self):
        if self.success and not self.done:
            raise ValueError("success implies done")


@dataclass(frozen=True)
class EnvDescriptor:
    variable_specs: tuple
    actions: tuple
    action_names: tuple
    horizon_hint: int


def _slip(action: int, slip: float, rng) -> int:
    if slip <= 0:
        return action
    u = rng.random()
    if u < slip:
        return _PERP[action][0]
    if u < 2 * slip:
        return _PERP[action][1]
    return action


class WumpusWorld:
    """Grid navigation with obstacles, terminal pits and one goal cell."""

    def __init__(self, size, obstacles, pits, start, goal, slip=0.1,
                 step_reward=-1.0, bump_reward=-2.0, pit_reward=-1000.0,
                 goal_reward=500.0, random_start=False, horizon_hint=400):
        if size < 2:
            raise ValueError("size must be >= 2")
        if not 0 <= slip < 0.5:
            raise ValueError("slip must be in [0, 0.5)")
        self.size = size
        self.obstacles = set(obstacles)
        self.pits = set(pits)
        self.start = start
        self.goal = goal
        self.slip = slip
        self.step_reward = step_reward
        self.bump_reward = bump_reward
        self.pit_reward = pit_reward
        self.goal_reward = goal_reward
        self.random_start = random_start
        self._state = start
        self.descriptor = EnvDescriptor(
            (VariableSpec("x", INTEGER, 1, size), VariableSpec("y", INTEGER, 1, size)),
            (EAST, WEST, NORTH, SOUTH), ("E", "W", "N", "S"), horizon_hint)

    def reset(self, rng) -> tuple:
        if self.random_start:
            blocked = self.obstacles | self.pits | {self.goal}
            while True:
                cell = (rng.randrange(1, self.size + 1), rng.randrange(1, self.size + 1))
                if cell not in blocked:
                    self._state = cell
                    break
        else:
            self._state = self.start
        return self._state

    def step(self, action, rng) -> StepResult:
        action = _slip(action, self.slip, rng)
        dx, dy = _MOVE[action]
        x, y = self._state
        nx, ny = x + dx, y + dy
        if not (1 <= nx <= self.size and 1 <= ny <= self.size) or (nx, ny) in self.obstacles:
            return StepResult(self._state, self.bump_reward, False, False)
        self._state = (nx, ny)
        if self._state in self.pits:
            return StepResult(self._state, self.pit_reward, True, False)
        if self._state == self.goal:
            return StepResult(self._state, self.goal_reward, True, True)
        return StepResult(self._state, self.step_reward, False, False)


def wumpus_make(size: int, layout_seed: int = 0, slip: float = 0.1) -> WumpusWorld:
    """Random layout: 8% obstacles, 4% pits, start NW, goal SE, with a
    flood-fill connectivity check (regenerated up to 100 times)."""
    if size < 4:
        raise ValueError("size must be >= 4")
    if not 0 <= slip < 0.5:
        raise ValueError("slip must be in [0, 0.5)")
    layout_rng = random.Random(layout_seed)
    start, goal = (1, 1), (size, size)
    # keep a one-cell clear margin around start and goal so slip cannot make
    # the task unwinnable from the first step
    margin = {
        (cx + dx, cy + dy)
        for cx, cy in (start, goal)
        for dx in (-1, 0, 1) for dy in (-1, 0, 1)
    }
    cells = [(x, y) for x in range(1, size + 1) for y in range(1, size + 1)
             if (x, y) not in margin]
    n_obs = round(0.08 * size * size)
    n_pit = round(0.04 * size * size)
    for _ in range(100):
        picked = layout_rng.sample(cells, n_obs + n_pit)
        obstacles, pits = set(picked[:n_obs]), set(picked[n_obs:])
        if _reachable(size, obstacles | pits, start, goal):
            return WumpusWorld(size, obstacles, pits, start, goal, slip,
                               horizon_hint=max(100, 4 * size))
    raise RuntimeError("could not generate a connected layout in 100 attempts")


def _reachable(size, blocked, start, goal) -> bool:
    seen, frontier = {start}, [start]
    while frontier:
        x, y = frontier.pop()
        if (x, y) == goal:
            return True
        for dx, dy in _MOVE.values():
            nxt = (x + dx, y + dy)
            if (1 <= nxt[0] <= size and 1 <= nxt[1] <= size
                    and nxt not in blocked and nxt not in seen):
                seen.add(nxt)
                frontier.append(nxt)
    return False


class OfficeWorld:
    """Four rooms with midpoint doorways; fetch coffee and mail, then reach
    the office.

    Layout: rooms A (NW, coffee), B (NE, mail), C (SW), D (SE, office);
    items sit at room centers and are picked up automatically on entry.
    """

    def __init__(self, size: int, slip: float = 0.1, task_reward: float = 1000.0,
                 horizon_hint=400):
        if size < 4 or size % 2:
            raise ValueError("size must be even and >= 4")
        self.size = size
        self.slip = slip
        self.task_reward = task_reward
        half = size // 2
        q = (half + 1) // 2
        self.half = half
        # doorway coordinates: one per half-wall segment
        self.v_doors = {q, half + q}        # rows where the vertical wall opens
        self.h_doors = {q, half + q}        # columns where the horizontal wall opens
        self.coffee = (q, q)
        self.mail = (half + q, q)
        self.office = (half + q, half + q)
        self._state = (1, 1, 0, 0)
        self.descriptor = EnvDescriptor(
            (VariableSpec("x", INTEGER, 1, size), VariableSpec("y", INTEGER, 1, size),
             VariableSpec("has_coffee", INTEGER, 0, 1), VariableSpec("has_mail", INTEGER, 0, 1)),
            (EAST, WEST, NORTH, SOUTH), ("E", "W", "N", "S"), horizon_hint)

    def _blocked(self, x, y, nx, ny) -> bool:
        if not (1 <= nx <= self.size and 1 <= ny <= self.size):
            return True
        h = self.half
        if {x, nx} == {h, h + 1} and y not in self.v_doors:
            return True
        if {y, ny} == {h, h + 1} and x not in self.h_doors:
            return True
        return False

    def reset(self, rng) -> tuple:
        x = rng.randrange(1, self.size + 1)
        y = rng.randrange(1, self.size + 1)
        self._state = (x, y, 0, 0)
        return self._state

    def step(self, action, rng) -> StepResult:
        action = _slip(action, self.slip, rng)
        dx, dy = _MOVE[action]
        x, y, c, m = self._state
        nx, ny = x + dx, y + dy
        if self._blocked(x, y, nx, ny):
            return StepResult(self._state, 0.0, False, False)
        if (nx, ny) == self.coffee:
            c = 1
        if (nx, ny) == self.mail:
            m = 1
        self._state = (nx, ny, c, m)
        if (nx, ny) == self.office and c and m:
            return StepResult(self._state, self.task_reward, True, True)
        return StepResult(self._state, 0.0, False, False)


def office_make(size: int, slip: float = 0.1) -> OfficeWorld:
    return OfficeWorld(size, slip)


IN_TAXI = 4


class TaxiWorld:
    """Single-passenger taxi on an open grid with a depot in each corner."""

    def __init__(self, size: int, slip: float = 0.1, move_reward: float = -1.0,
                 illegal_reward: float = -100.0, dropoff_reward: float = 500.0,
                 horizon_hint=300):
        if size < 5:
            raise ValueError("size must be >= 5")
        self.size = size
        self.slip = slip
        self.move_reward = move_reward
        self.illegal_reward = illegal_reward
        self.dropoff_reward = dropoff_reward
        self.depots = ((1, 1), (size, 1), (1, size), (size, size))
        self._state = (1, 1, 0, 1)
        self.descriptor = EnvDescriptor(
            (VariableSpec("taxi_x", INTEGER, 1, size), VariableSpec("taxi_y", INTEGER, 1, size),
             VariableSpec("passenger", INTEGER, 0, IN_TAXI),
             VariableSpec("destination", INTEGER, 0, 3)),
            (EAST, WEST, NORTH, SOUTH, PICKUP, DROPOFF),
            ("E", "W", "N", "S", "Pickup", "Dropoff"), horizon_hint)

    def reset(self, rng) -> tuple:
        x = rng.randrange(1, self.size + 1)
        y = rng.randrange(1, self.size + 1)
        passenger = rng.randrange(4)
        dest = rng.randrange(3)
        if dest >= passenger:
            dest += 1  # destination always differs from the pickup depot
        self._state = (x, y, passenger, dest)
        return self._state

    def step(self, action, rng) -> StepResult:
        x, y, p, d = self._state
        if action in _MOVE:
            action = _slip(action, self.slip, rng)
            dx, dy = _MOVE[action]
            nx, ny = x + dx, y + dy
            if 1 <= nx <= self.size and 1 <= ny <= self.size:
                self._state = (nx, ny, p, d)
            return StepResult(self._state, self.move_reward, False, False)
        if action == PICKUP:
            if p != IN_TAXI and (x, y) == self.depots[p]:
                self._state = (x, y, IN_TAXI, d)
                return StepResult(self._state, self.move_reward, False, False)
            return StepResult(self._state, self.illegal_reward, False, False)
        if action == DROPOFF:
            if p == IN_TAXI and (x, y) == self.depots[d]:
                return StepResult(self._state, self.dropoff_reward, True, True)
            return StepResult(self._state, self.illegal_reward, False, False)
        raise ValueError(f"unknown action {action}")


def taxi_make(size: int, slip: float = 0.1) -> TaxiWorld:
    return TaxiWorld(size, slip)


class WaterWorld:
    """Continuous 300x300 box: catch the moving green ball, avoid the red.

    Balls drift at constant speed with elastic wall bounces; ball headings
    are hidden state (not part of the observed variables). Radii and speeds
    are fixed so the chase is winnable within the 100-step episode cap.
    """

    BOX = 300.0
    RADIUS = 10.0
    BALL_SPEED = 4.0
    AGENT_SPEED = 6.0

    def __init__(self, collide_reward: float = 1000.0, horizon_hint: int = 100):
        self.collide_reward = collide_reward
        spec = lambda name: VariableSpec(name, REAL, 0.0, self.BOX)
        self.descriptor = EnvDescriptor(
            (spec("agent_x"), spec("agent_y"), spec("green_x"), spec("green_y"),
             spec("red_x"), spec("red_y")),
            (EAST, WEST, NORTH, SOUTH), ("E", "W", "N", "S"), horizon_hint)
        self._pos = None
        self._vel = None

    def _collided(self, ax, ay, bx, by) -> bool:
        return math.hypot(ax - bx, ay - by) < 2 * self.RADIUS

    def reset(self, rng) -> tuple:
        while True:
            pos = [rng.uniform(0.0, self.BOX) for _ in range(6)]
            if (not self._collided(pos[0], pos[1], pos[2], pos[3])
                    and not self._collided(pos[0], pos[1], pos[4], pos[5])):
                break
        self._pos = pos
        self._vel = []
        for _ in range(2):
            angle = rng.uniform(0.0, 2 * math.pi)
            self._vel += [self.BALL_SPEED * math.cos(angle), self.BALL_SPEED * math.sin(angle)]
        return tuple(self._pos)

    def _bounce(self, i_pos, i_vel):
        v = self._pos[i_pos] + self._vel[i_vel]
        if v < 0.0:
            v = -v
            self._vel[i_vel] = -self._vel[i_vel]
        elif v > self.BOX:
            v = 2 * self.BOX - v
            self._vel[i_vel] = -self._vel[i_vel]
        self._pos[i_pos] = v

    def step(self, action, rng) -> StepResult:
        dx, dy = _MOVE[action]
        self._pos[0] = min(max(self._pos[0] + dx * self.AGENT_SPEED, 0.0), self.BOX)
        self._pos[1] = min(max(self._pos[1] + dy * self.AGENT_SPEED, 0.0), self.BOX)
        for ball in range(2):
            self._bounce(2 + 2 * ball, 2 * ball)
            self._bounce(3 + 2 * ball, 2 * ball + 1)
        state = tuple(self._pos)
        if self._collided(state[0], state[1], state[2], state[3]):
            return StepResult(state, self.collide_reward, True, True)
        if self._collided(state[0], state[1], state[4], state[5]):
            return StepResult(state, -self.collide_reward, True, False)
        return StepResult(state, 0.0, False, False)


def waterworld_make() -> WaterWorld:
    return WaterWorld()
