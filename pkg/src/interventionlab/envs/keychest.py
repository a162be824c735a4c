"""KeyChest grid-world.

The player walks on a grid collecting food (restores health), keys (open
chests) and pressing a button (toggles a lamp). Health drops by one every
step and the episode ends when it reaches zero. Every counter update caused
by an event is applied one step after the event, so that the event at step
``t`` is a first-order cause of the counter at step ``t + 1``.

Observation noise: at every step each empty floor cell displays food with
probability ``food_noise_prob``. The feature extractor only sees the display,
so walking onto a cell showing fake food registers as a food event even
though health does not change.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from importlib import resources
from typing import Optional

import numpy as np

from .features import FeatureSpec, extract_features


class Layout(str, enum.Enum):
    RANDOM_A = "RandomA"
    FIXED_B = "FixedB"
    RANDOM_C = "RandomC"


class Action(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    NOOP = 4


class Item(enum.IntEnum):
    EMPTY = 0
    FOOD = 1
    KEY = 2
    CHEST = 3
    BUTTON = 4
    WALL = 5


_MOVES = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
    Action.NOOP: (0, 0),
}

_CHARS = {
    ".": Item.EMPTY,
    "F": Item.FOOD,
    "K": Item.KEY,
    "C": Item.CHEST,
    "B": Item.BUTTON,
    "#": Item.WALL,
    "P": Item.EMPTY,
}

BASE_FEATURES = (
    "health",
    "keys",
    "lamp",
    "food_collected",
    "key_collected",
    "chest_opened",
    "button_pressed",
    "food_visible_count",
    "reward",
)
CONJUNCTIONS = (("keys", "food_collected"), ("lamp", "button_pressed"))


class ConfigError(ValueError):
    """Raised for an inconsistent :class:`GridConfig`."""


@dataclasses.dataclass
class GridConfig:
    layout: Layout = Layout.RANDOM_A
    width: int = 5
    height: int = 5
    food_noise_prob: float = 0.01
    initial_health: int = 10
    food_health_gain: int = 5
    chest_reward: float = 1.0
    max_episode_steps: int = 100
    n_food: int = 2
    seed: int = 0

    def __post_init__(self):
        self.layout = Layout(self.layout)

    def validate(self) -> None:
        if not 0.0 <= self.food_noise_prob <= 1.0:
            raise ConfigError(f"food_noise_prob must be in [0, 1], got {self.food_noise_prob}")
        if self.initial_health <= 0:
            raise ConfigError("initial_health must be positive")
        if self.max_episode_steps <= 0:
            raise ConfigError("max_episode_steps must be positive")
        if self.layout is Layout.FIXED_B:
            return
        # player + food + key + chest + button
        n_items = self.n_food + 3
        if self.width < 1 or self.height < 1 or self.width * self.height < n_items + 1:
            raise ConfigError(
                f"{self.width}x{self.height} grid cannot hold {n_items} items and the player"
            )

    @classmethod
    def for_env(cls, env_id: str, **overrides) -> "GridConfig":
        """Default configuration of environment ``"A"``, ``"B"`` or ``"C"``."""
        presets = {
            "A": dict(layout=Layout.RANDOM_A, width=5, height=5, initial_health=10, n_food=2),
            "B": dict(layout=Layout.FIXED_B, width=10, height=7, initial_health=6, n_food=2),
            "C": dict(layout=Layout.RANDOM_C, width=10, height=10, initial_health=15, n_food=2),
        }
        if env_id not in presets:
            raise ConfigError(f"unknown KeyChest environment {env_id!r}")
        return cls(**{**presets[env_id], **overrides})

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["layout"] = self.layout.value
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GridConfig":
        return cls(**json.loads(text))


@dataclasses.dataclass
class Events:
    food: int = 0
    key: int = 0
    chest: int = 0
    button: int = 0


@dataclasses.dataclass(frozen=True)
class FeatureObservation:
    """What the hand-designed feature extractor can read off one frame."""

    health: int
    keys: int
    lamp: int
    food_collected: int
    key_collected: int
    chest_opened: int
    button_pressed: int
    food_visible_count: int
    reward: float


@dataclasses.dataclass
class GridState:
    player: tuple
    items: np.ndarray
    health: int
    keys: int = 0
    lamp: int = 0
    pending: Events = dataclasses.field(default_factory=Events)
    step_count: int = 0
    display: Optional[np.ndarray] = None
    done: bool = False

    def copy(self) -> "GridState":
        return dataclasses.replace(
            self,
            items=self.items.copy(),
            pending=dataclasses.replace(self.pending),
            display=None if self.display is None else self.display.copy(),
        )


def parse_layout(text: str) -> tuple:
    """Parse a text map into ``(items, player)``.

    One character per cell: ``.`` empty, ``#`` wall, ``P`` player,
    ``F`` food, ``K`` key, ``C`` chest, ``B`` button.
    """
    rows = [line.rstrip("\n") for line in text.strip().splitlines()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError("layout must be a non-empty rectangle")
    items = np.zeros((len(rows), len(rows[0])), dtype=np.int8)
    player = None
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch not in _CHARS:
                raise ConfigError(f"unknown layout character {ch!r} at row {r}, column {c}")
            items[r, c] = _CHARS[ch]
            if ch == "P":
                if player is not None:
                    raise ConfigError("layout has more than one player")
                player = (r, c)
    if player is None:
        raise ConfigError("layout has no player")
    return items, player


def load_fixed_b() -> str:
    return resources.files(__package__).joinpath("layouts/fixed_b.txt").read_text()


def _random_layout(config: GridConfig, rng: np.random.Generator) -> tuple:
    h, w = config.height, config.width
    items = np.zeros((h, w), dtype=np.int8)
    n = h * w
    if config.layout is Layout.RANDOM_A:
        cells = rng.permutation(n)[: config.n_food + 4]
        player = divmod(int(cells[0]), w)
        for k in cells[1 : 1 + config.n_food]:
            items.flat[k] = Item.FOOD
        rest = cells[1 + config.n_food :]
        items.flat[rest[0]] = Item.KEY
        items.flat[rest[1]] = Item.CHEST
        items.flat[rest[2]] = Item.BUTTON
        return items, player

    # RandomC: food around the key, chest as far from the key as possible
    rows, cols = np.divmod(np.arange(n), w)
    key = int(rng.integers(n))
    items.flat[key] = Item.KEY
    dist = np.abs(rows - rows[key]) + np.abs(cols - cols[key])
    near = np.flatnonzero((dist >= 1) & (dist <= 2))
    for k in rng.choice(near, size=config.n_food, replace=False):
        items.flat[k] = Item.FOOD
    free = np.flatnonzero(items.ravel() == Item.EMPTY)
    far = free[dist[free] == dist[free].max()]
    items.flat[rng.choice(far)] = Item.CHEST
    free = np.flatnonzero(items.ravel() == Item.EMPTY)
    button, start = rng.choice(free, size=2, replace=False)
    items.flat[button] = Item.BUTTON
    return items, divmod(int(start), w)


def keychest_feature_spec(config: GridConfig) -> FeatureSpec:
    n_cells = config.width * config.height
    max_health = config.initial_health + config.food_health_gain * max(config.n_food, 1)
    bounds = {
        "health": (0, max_health),
        "keys": (0, 1),
        "lamp": (0, 1),
        "food_visible_count": (0, n_cells),
        "reward": (0, config.chest_reward),
    }
    names = list(BASE_FEATURES)
    lo = [bounds.get(k, (0, 1))[0] for k in names]
    hi = [bounds.get(k, (0, 1))[1] for k in names]
    pairs = [(names.index(a), names.index(b)) for a, b in CONJUNCTIONS]
    return FeatureSpec.with_conjunctions(names, lo, hi, pairs)


class KeyChestEnv:
    """Stateful KeyChest simulator, deterministic given the reset seed.

    ``reset`` and ``step`` return a :class:`FeatureObservation`; the policy
    input (one-hot item grid plus health, keys and lamp) comes from
    :meth:`observation` and the learner's feature vector from :meth:`features`.
    """

    n_actions = len(Action)

    def __init__(self, config: GridConfig):
        config.validate()
        self.config = config
        self._fixed = None
        if config.layout is Layout.FIXED_B:
            self._fixed = parse_layout(load_fixed_b())
            h, w = self._fixed[0].shape
            self.config = config = dataclasses.replace(config, height=h, width=w)
        self.feature_spec = keychest_feature_spec(config)
        self.state: Optional[GridState] = None
        self.last_obs: Optional[FeatureObservation] = None
        self._rng = np.random.default_rng(config.seed)

    @property
    def obs_dim(self) -> int:
        return 5 * self.config.width * self.config.height + 3

    def reset(self, seed: Optional[int] = None) -> FeatureObservation:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if self._fixed is not None:
            items, player = self._fixed[0].copy(), self._fixed[1]
        else:
            items, player = _random_layout(self.config, self._rng)
        self.state = GridState(player=player, items=items, health=self.config.initial_health)
        self.state.display = self._render_display()
        self.last_obs = self._feature_obs(Events(), 0, 0.0)
        return self.last_obs

    def _render_display(self) -> np.ndarray:
        items = self.state.items
        p = self.config.food_noise_prob
        display = items == Item.FOOD
        if p > 0:
            display = display | ((items == Item.EMPTY) & (self._rng.random(items.shape) < p))
        return display

    def _feature_obs(self, events: Events, seen_food: int, reward: float) -> FeatureObservation:
        s = self.state
        return FeatureObservation(
            health=s.health,
            keys=s.keys,
            lamp=s.lamp,
            food_collected=seen_food,
            key_collected=events.key,
            chest_opened=events.chest,
            button_pressed=events.button,
            food_visible_count=int(s.display.sum()),
            reward=reward,
        )

    def step(self, action: int) -> tuple:
        """Advance one step; returns ``(observation, reward, done)``."""
        s = self.state
        if s is None or s.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        cfg = self.config
        ev = s.pending
        s.health += cfg.food_health_gain * ev.food - 1
        s.keys += ev.key - ev.chest
        s.lamp ^= ev.button
        reward = cfg.chest_reward * ev.chest

        new = Events()
        seen_food = 0
        dr, dc = _MOVES[Action(action)]
        r, c = s.player[0] + dr, s.player[1] + dc
        h, w = s.items.shape
        if (dr or dc) and 0 <= r < h and 0 <= c < w and s.items[r, c] != Item.WALL:
            seen_food = int(s.display[r, c])
            s.player = (r, c)
            item = s.items[r, c]
            if item == Item.FOOD:
                new.food = 1
                s.items[r, c] = Item.EMPTY
            elif item == Item.KEY:
                new.key = 1
                s.items[r, c] = Item.EMPTY
            elif item == Item.CHEST and s.keys > 0:
                new.chest = 1
                s.items[r, c] = Item.EMPTY
            elif item == Item.BUTTON:
                new.button = 1
        s.pending = new
        s.step_count += 1
        s.display = self._render_display()
        s.done = s.health <= 0 or s.step_count >= cfg.max_episode_steps
        self.last_obs = self._feature_obs(new, seen_food, reward)
        return self.last_obs, reward, s.done

    def observation(self) -> np.ndarray:
        s = self.state
        items = s.items.ravel()
        n = items.size
        out = np.zeros(5 * n + 3)
        out[s.player[0] * s.items.shape[1] + s.player[1]] = 1.0
        out[n : 2 * n] = s.display.ravel()
        out[2 * n : 3 * n] = items == Item.KEY
        out[3 * n : 4 * n] = items == Item.CHEST
        out[4 * n : 5 * n] = items == Item.BUTTON
        out[5 * n :] = (s.health / self.config.initial_health, s.keys, s.lamp)
        return out

    def features(self, action=None) -> np.ndarray:
        return extract_features(self.last_obs, self.feature_spec)

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.done

    def render(self) -> str:
        s = self.state
        inv = {v: k for k, v in _CHARS.items() if k != "P"}
        rows = []
        for r in range(s.items.shape[0]):
            line = []
            for c in range(s.items.shape[1]):
                if (r, c) == s.player:
                    line.append("P")
                elif s.items[r, c] == Item.EMPTY and s.display[r, c]:
                    line.append("f")
                else:
                    line.append(inv[int(s.items[r, c])])
            rows.append("".join(line))
        return "\n".join(rows)


def keychest_reset(config: GridConfig, seed: int) -> KeyChestEnv:
    """Build an environment and start an episode with the given seed."""
    env = KeyChestEnv(config)
    env.reset(seed)
    return env


def keychest_step(env: KeyChestEnv, action: int) -> tuple:
    """Step ``env``; returns ``(state snapshot, observation, reward, done)``."""
    obs, reward, done = env.step(action)
    return env.state.copy(), obs, reward, done
