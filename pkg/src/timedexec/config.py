"""Scenario configuration: validation and TOML round-tripping.

Schema (all keys optional except where noted)::

    seed = 7
    runs = 1
    pool_size = 15            # defaults to n*l

    [protocol]
    l = 3                     # required
    m = 2                     # required
    n = 5                     # required
    deposit = 100
    trustee_reward = 10
    executor_bonus = 20

    [windows]
    setup = [1, 10]           # [start, end) ticks, end <= execution start
    execution = [10, 20]

    [policy]
    p_im = 0.0                # inadvertent absence probability per trustee
    mix = { absent = 0.1 }    # fraction of candidates per misbehavior kind
    slots = { "3" = "advance_disclosure" }   # tid -> behavior override
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, replace
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .ledger import TimeWindow
from .policies import Behavior
from .scheduler import DEFAULT_DEPOSIT, DEFAULT_EXECUTOR_BONUS, DEFAULT_TRUSTEE_REWARD

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "loads_config", "instance_a", "instance_b"]


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class ScenarioConfig:
    l: int
    m: int
    n: int
    pool_size: int | None = None
    setup_window: TimeWindow = TimeWindow(1, 10)
    execution_window: TimeWindow = TimeWindow(10, 20)
    deposit: int = DEFAULT_DEPOSIT
    trustee_reward: int = DEFAULT_TRUSTEE_REWARD
    executor_bonus: int = DEFAULT_EXECUTOR_BONUS
    p_im: float = 0.0
    mix: dict[str, float] = field(default_factory=dict)
    slot_policies: dict[int, str] = field(default_factory=dict)
    seed: int = 0
    runs: int = 1

    def __post_init__(self) -> None:
        if self.pool_size is None:
            object.__setattr__(self, "pool_size", self.n * self.l if isinstance(self.n, int) and isinstance(self.l, int) else None)
        self.validate()

    @property
    def slots(self) -> int:
        return self.n * self.l

    def validate(self) -> None:
        for name in ("l", "m", "n", "pool_size", "deposit", "trustee_reward", "executor_bonus", "seed", "runs"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer")
        if not 1 <= self.m <= self.n <= 255:
            raise ConfigError(f"need 1 <= m <= n <= 255 (m={self.m}, n={self.n})")
        if self.l < 2:
            raise ConfigError(f"l must be at least 2 (l={self.l})")
        if self.pool_size < 0:
            raise ConfigError("pool_size must be non-negative")
        if min(self.deposit, self.trustee_reward, self.executor_bonus) < 0:
            raise ConfigError("protocol constants must be non-negative")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        ws, we = self.setup_window, self.execution_window
        if ws.start < 1:
            raise ConfigError("setup window must start at tick 1 or later (tick 0 deploys contracts)")
        if ws.end - ws.start < 2:
            raise ConfigError("setup window needs at least 2 ticks")
        if ws.end > we.start:
            raise ConfigError("execution window must start at or after the end of the setup window")
        if we.end - we.start < 2:
            raise ConfigError("execution window needs at least 2 ticks")
        if not 0.0 <= self.p_im <= 1.0:
            raise ConfigError(f"p_im must lie in [0, 1] (got {self.p_im})")
        total = 0.0
        for kind, prob in self.mix.items():
            _behavior(kind)
            if not 0.0 <= prob <= 1.0:
                raise ConfigError(f"mix probability for {kind} outside [0, 1]")
            total += prob
        if total > 1.0 + 1e-12:
            raise ConfigError("mix probabilities sum above 1")
        for tid, kind in self.slot_policies.items():
            _behavior(kind)
            if not 0 <= tid < self.slots:
                raise ConfigError(f"slot override tid {tid} outside [0, {self.slots})")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict[str, Any]:
        policy: dict[str, Any] = {"p_im": self.p_im}
        if self.mix:
            policy["mix"] = dict(self.mix)
        if self.slot_policies:
            policy["slots"] = {str(k): v for k, v in sorted(self.slot_policies.items())}
        return {
            "seed": self.seed,
            "runs": self.runs,
            "pool_size": self.pool_size,
            "protocol": {
                "l": self.l,
                "m": self.m,
                "n": self.n,
                "deposit": self.deposit,
                "trustee_reward": self.trustee_reward,
                "executor_bonus": self.executor_bonus,
            },
            "windows": {
                "setup": [self.setup_window.start, self.setup_window.end],
                "execution": [self.execution_window.start, self.execution_window.end],
            },
            "policy": policy,
        }

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict[str, Any], text: str | None = None) -> "ScenarioConfig":
        locate = _Locator(text)
        known = {"seed", "runs", "pool_size", "protocol", "windows", "policy"}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown key {key!r}", locate(None, key))
        protocol = _section(data, "protocol", locate)
        windows = _section(data, "windows", locate)
        policy = _section(data, "policy", locate)
        for key in protocol:
            if key not in {"l", "m", "n", "deposit", "trustee_reward", "executor_bonus"}:
                raise ConfigError(f"unknown key protocol.{key}", locate("protocol", key))
        for key in windows:
            if key not in {"setup", "execution"}:
                raise ConfigError(f"unknown key windows.{key}", locate("windows", key))
        for key in policy:
            if key not in {"p_im", "mix", "slots"}:
                raise ConfigError(f"unknown key policy.{key}", locate("policy", key))
        for key in ("l", "m", "n"):
            if key not in protocol:
                raise ConfigError(f"missing required key protocol.{key}", locate("protocol", None))

        kwargs: dict[str, Any] = {k: protocol[k] for k in protocol}
        for key in ("seed", "runs", "pool_size"):
            if key in data:
                kwargs[key] = data[key]
        if "setup" in windows:
            kwargs["setup_window"] = _window(windows["setup"], locate("windows", "setup"))
        if "execution" in windows:
            kwargs["execution_window"] = _window(windows["execution"], locate("windows", "execution"))
        if "p_im" in policy:
            kwargs["p_im"] = float(policy["p_im"])
        if "mix" in policy:
            kwargs["mix"] = {str(k): float(v) for k, v in policy["mix"].items()}
        if "slots" in policy:
            try:
                kwargs["slot_policies"] = {int(k): str(v) for k, v in policy["slots"].items()}
            except ValueError:
                raise ConfigError("slot override keys must be integer tids", locate("policy", "slots")) from None
        try:
            return cls(**kwargs)
        except ConfigError as exc:
            if exc.line is None:
                raise ConfigError(str(exc), _guess_line(locate, str(exc))) from None
            raise


def _behavior(kind: str) -> Behavior:
    try:
        return Behavior(kind)
    except ValueError:
        raise ConfigError(f"unknown behavior {kind!r}") from None


def _section(data: dict, name: str, locate) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a table", locate(None, name))
    return value


def _window(value: Any, line: int | None) -> TimeWindow:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value)):
        raise ConfigError("window must be a [start, end] pair of integer ticks", line)
    try:
        return TimeWindow(value[0], value[1])
    except ValueError as exc:
        raise ConfigError(str(exc), line) from None


class _Locator:
    """Map (section, key) back to a 1-based line number in the source text."""

    def __init__(self, text: str | None) -> None:
        self.lines = text.splitlines() if text else []

    def __call__(self, section: str | None, key: str | None) -> int | None:
        current = None
        for number, raw in enumerate(self.lines, start=1):
            line = raw.strip()
            header = re.match(r"^\[([^\]]+)\]$", line)
            if header:
                current = header.group(1).strip()
                if key is None and current == section:
                    return number
                continue
            if key is not None and current == section and re.match(rf'^"?{re.escape(key)}"?\s*=', line):
                return number
            if key is not None and section and current is None and line.startswith(f"{section}."):
                if re.match(rf"^{re.escape(section)}\.{re.escape(key)}\s*=", line):
                    return number
        return None


_FIELD_LINES = {
    "m": ("protocol", "m"),
    "n": ("protocol", "n"),
    "l": ("protocol", "l"),
    "pool_size": (None, "pool_size"),
    "runs": (None, "runs"),
    "seed": (None, "seed"),
    "setup window": ("windows", "setup"),
    "execution window": ("windows", "execution"),
    "p_im": ("policy", "p_im"),
    "mix": ("policy", "mix"),
    "slot override": ("policy", "slots"),
    "protocol constants": ("protocol", "deposit"),
    "deposit": ("protocol", "deposit"),
}


def _guess_line(locate: _Locator, message: str) -> int | None:
    """Line of the field named earliest in ``message``."""
    hits = []
    for needle, (section, key) in _FIELD_LINES.items():
        found = re.search(rf"\b{re.escape(needle)}\b", message)
        if found:
            hits.append((found.start(), -len(needle), section, key))
    for _, _, section, key in sorted(hits):
        line = locate(section, key)
        if line is not None:
            return line
    return None


def loads_config(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(match.group(1)) if match else None) from None
    return ScenarioConfig.from_dict(data, text)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read())


def instance_a(**overrides: Any) -> ScenarioConfig:
    """(l, m, n) = (3, 2, 5): 15 trustees."""
    return ScenarioConfig(l=3, m=2, n=5, **overrides)


def instance_b(**overrides: Any) -> ScenarioConfig:
    """(l, m, n) = (4, 4, 10): 40 trustees."""
    return ScenarioConfig(l=4, m=4, n=10, **overrides)
