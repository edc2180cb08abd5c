"""
Deterministic discrete-time simulation substrate.

Provides the fixed-step time grid, counter-based random streams keyed by
``(seed, stream_id)`` and a sweep runner whose results do not depend on the
execution order or on the number of workers.
"""

from __future__ import annotations

import dataclasses
import traceback
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "TimeGrid",
    "make_grid",
    "RngHandle",
    "SweepSpec",
    "SweepResult",
    "run_sweep",
    "as_generator",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid. ``dt`` is the effective step, ``n_steps * dt == t_end``."""

    dt: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise InvalidArgumentError("TimeGrid needs dt > 0 and t_end > 0")
        if self.n_steps != round(self.t_end / self.dt):
            raise InvalidArgumentError("n_steps must equal round(t_end/dt)")

    def step_starts(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    def step_ends(self) -> np.ndarray:
        return np.arange(1, self.n_steps + 1) * self.dt


def make_grid(dt: float, t_end: float) -> TimeGrid:
    """Build a grid of ``round(t_end/dt)`` steps ending exactly at ``t_end``.

    The requested ``dt`` is adjusted to ``t_end / n_steps`` so that the last
    step lands on ``t_end``; the adjustment is below half a step in total.
    """
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt!r}")
    if not t_end > 0:
        raise InvalidArgumentError(f"t_end must be positive, got {t_end!r}")
    if t_end < dt:
        raise InvalidArgumentError(f"t_end ({t_end}) shorter than dt ({dt})")
    n = int(round(t_end / dt))
    return TimeGrid(dt=t_end / n, t_end=t_end, n_steps=n)


@dataclass(frozen=True)
class RngHandle:
    """Named random stream.

    Streams come from a Philox counter-based generator whose key is derived
    from ``(seed, stream_id, *substream path)`` via ``numpy.random.SeedSequence``,
    so a pixel's draws never depend on which other pixels were simulated or
    in what order.
    """

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def __post_init__(self):
        if not (0 <= self.seed < 2**64):
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if self.stream_id < 0:
            raise InvalidArgumentError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, *key: int) -> "RngHandle":
        """Child stream, e.g. one per pixel: ``handle.substream(row, col)``."""
        return RngHandle(self.seed, self.stream_id, self.path + tuple(int(k) for k in key))


def as_generator(rng) -> np.random.Generator:
    """Accept either an ``RngHandle`` or an already-open ``Generator``."""
    if isinstance(rng, RngHandle):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidArgumentError(f"expected RngHandle or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class SweepSpec:
    """Sweep of one field of a (frozen dataclass) base configuration.

    Bounds are checked eagerly: every value is applied to ``base`` once at
    construction, so the configuration's own validation rejects values outside
    its physical range before any simulation starts.
    """

    parameter: str
    values: Sequence[Any]
    base: Any

    def __post_init__(self):
        if len(self.values) == 0:
            raise InvalidArgumentError("sweep needs at least one value")
        if not dataclasses.is_dataclass(self.base):
            raise InvalidArgumentError("base configuration must be a dataclass instance")
        names = {f.name for f in dataclasses.fields(self.base)}
        if self.parameter not in names:
            raise InvalidArgumentError(
                f"{type(self.base).__name__} has no field {self.parameter!r}"
            )
        object.__setattr__(self, "values", tuple(self.values))
        for v in self.values:
            self.config_for(v)

    def config_for(self, value):
        return dataclasses.replace(self.base, **{self.parameter: value})


@dataclass(frozen=True)
class SweepResult:
    value: Any
    result: Any = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_point(sim, config, value):
    try:
        return SweepResult(value=value, result=sim(config))
    except Exception as exc:  # reported per value, the sweep continues
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return SweepResult(value=value, error=detail)


def run_sweep(
    spec: SweepSpec,
    sim: Callable[[Any], Any],
    workers: int = 1,
    backend: str = "thread",
) -> list[SweepResult]:
    """Run ``sim`` once per sweep value; results keep the order of ``spec.values``.

    ``backend`` is ``"thread"`` or ``"process"`` (the latter needs a picklable
    ``sim``). A failing point yields a ``SweepResult`` with ``error`` set.
    """
    configs = [spec.config_for(v) for v in spec.values]
    if workers <= 1:
        return [_run_point(sim, c, v) for c, v in zip(configs, spec.values)]
    if backend == "thread":
        pool_cls = ThreadPoolExecutor
    elif backend == "process":
        pool_cls = ProcessPoolExecutor
    else:
        raise InvalidArgumentError(f"unknown backend {backend!r}")
    with pool_cls(max_workers=workers) as pool:
        futures = [pool.submit(_run_point, sim, c, v) for c, v in zip(configs, spec.values)]
        return [f.result() for f in futures]
