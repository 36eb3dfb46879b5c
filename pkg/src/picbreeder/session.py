"""Per-agent evolutionary episode state machine.

A session starts fresh or by branching a published image, runs exactly 20
selection generations over populations of 15, and ends with one titled
publication.  Color toggles re-render but do not consume a generation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from random import Random

from . import cppn
from .cppn import Genome, ImageBuffer
from .neat import MutationParams, ParameterError, make_offspring

DEFAULT_MODE_COLOR_ON = "both"
DEFAULT_MODE_COLOR_OFF = "structure-only"


class SessionStateError(RuntimeError):
    """An action was applied in a state where it is not legal."""


@dataclass(frozen=True)
class SessionConfig:
    generations_to_publish: int = 20
    pop_size: int = 15
    default_strength: float = 0.5
    width: int = 128
    height: int = 128
    fixed_length: bool = True
    max_consecutive_toggles: int = 3


@dataclass(frozen=True)
class ToggleColor:
    pass


@dataclass(frozen=True)
class Select:
    indices: tuple[int, ...]
    strength: float | None = None
    mode: str | None = None


@dataclass(frozen=True)
class Publish:
    index: int
    title: str


@dataclass(frozen=True)
class PublicationRecord:
    genome: Genome
    image: ImageBuffer
    title: str
    color_mode: bool
    parent_id: int | None


@dataclass
class SessionState:
    config: SessionConfig
    parent_id: int | None           # None for fresh-origin sessions
    generation: int
    population: tuple[Genome, ...]
    color_mode: bool
    params: MutationParams
    transcript: list[dict] = field(default_factory=list)
    consecutive_toggles: int = 0
    published: bool = False

    def render(self, index: int) -> ImageBuffer:
        return cppn.render(self.population[index], self.config.width,
                           self.config.height, self.color_mode)

    def render_all(self) -> list[ImageBuffer]:
        return [self.render(i) for i in range(len(self.population))]

    def population_hashes(self) -> list[str]:
        return [cppn.genome_hash(g) for g in self.population]

    def can_publish(self) -> bool:
        if not self.config.fixed_length:
            return not self.published
        return (self.generation == self.config.generations_to_publish
                and not self.published)


def _default_params(config: SessionConfig, color_mode: bool) -> MutationParams:
    mode = DEFAULT_MODE_COLOR_ON if color_mode else DEFAULT_MODE_COLOR_OFF
    return MutationParams(strength=config.default_strength, mode=mode)


def _record(state: SessionState, event: str, **extra) -> None:
    state.transcript.append({
        "event": event,
        "ts": time.time(),
        "generation": state.generation,
        "color_mode": state.color_mode,
        "population": state.population_hashes(),
        **extra,
    })


def start_fresh(config: SessionConfig, rng: Random) -> SessionState:
    """Fresh random population; grayscale, default mutation settings."""
    population = tuple(cppn.init_genome(rng) for _ in range(config.pop_size))
    state = SessionState(
        config=config, parent_id=None, generation=0, population=population,
        color_mode=False, params=_default_params(config, False))
    _record(state, "start", origin="fresh")
    return state


def start_branch(parent_genome: Genome, parent_id: int, parent_color_mode: bool,
                 config: SessionConfig, registry, rng: Random) -> SessionState:
    """Branch a published image: slot 0 is an exact copy, the rest mutants.

    The session inherits the color mode the parent was published under.
    """
    params = _default_params(config, parent_color_mode)
    population = make_offspring([parent_genome], params, registry, rng,
                                pop_size=config.pop_size)
    state = SessionState(
        config=config, parent_id=parent_id, generation=0, population=population,
        color_mode=parent_color_mode, params=params)
    _record(state, "start", origin="branch", parent_id=parent_id)
    return state


def _validate_select(state: SessionState, action: Select) -> None:
    if not action.indices:
        raise ParameterError("selection must name at least one parent")
    if len(set(action.indices)) != len(action.indices):
        raise ParameterError("selection indices must be distinct")
    for i in action.indices:
        if not 0 <= i < len(state.population):
            raise ParameterError(f"selection index {i} out of range")
    if action.strength is not None and not 0.01 <= action.strength <= 1.0:
        raise ParameterError(f"strength {action.strength} outside [0.01, 1]")
    if action.mode is not None:
        if action.mode not in ("structure-only", "color-only", "both"):
            raise ParameterError(f"unknown mutation mode {action.mode!r}")
        if action.mode != "structure-only" and not state.color_mode:
            raise ParameterError("color mutation modes require color mode on")


def apply_action(state: SessionState, action, registry, rng: Random,
                 rationale: str = "") -> SessionState:
    """Apply a ToggleColor or Select to the session, mutating it in place.

    ToggleColor flips the color mode without consuming a generation; Select
    breeds the next population and advances the generation counter.
    """
    if state.published:
        raise SessionStateError("session already published")

    if isinstance(action, ToggleColor):
        if state.consecutive_toggles >= state.config.max_consecutive_toggles:
            raise SessionStateError(
                f"more than {state.config.max_consecutive_toggles} consecutive color toggles")
        state.color_mode = not state.color_mode
        if not state.color_mode:
            state.params = replace(state.params, mode=DEFAULT_MODE_COLOR_OFF)
        else:
            state.params = replace(state.params, mode=DEFAULT_MODE_COLOR_ON)
        state.consecutive_toggles += 1
        _record(state, "toggle", rationale=rationale)
        return state

    if isinstance(action, Select):
        if (state.config.fixed_length
                and state.generation >= state.config.generations_to_publish):
            raise SessionStateError("session is due for publication")
        _validate_select(state, action)
        params = state.params
        if action.strength is not None:
            params = replace(params, strength=action.strength)
        if action.mode is not None:
            params = replace(params, mode=action.mode)
        parents = [state.population[i] for i in action.indices]
        state.params = params
        state.population = make_offspring(parents, params, registry, rng,
                                          pop_size=state.config.pop_size)
        state.generation += 1
        state.consecutive_toggles = 0
        _record(state, "select", indices=list(action.indices),
                strength=action.strength, mode=action.mode, rationale=rationale)
        return state

    raise ParameterError(f"unsupported action {action!r}")


def finalize_publish(state: SessionState, index: int, title: str,
                     rationale: str = "") -> PublicationRecord:
    """Publish population[index] under the given title and end the session."""
    if state.published:
        raise SessionStateError("session already published")
    if state.config.fixed_length and state.generation != state.config.generations_to_publish:
        raise SessionStateError(
            f"publication requires generation {state.config.generations_to_publish}, "
            f"at {state.generation}")
    if not 0 <= index < len(state.population):
        raise ParameterError(f"publish index {index} out of range")
    if not title.strip():
        raise ParameterError("publication title must be nonempty")

    record = PublicationRecord(
        genome=state.population[index],
        image=state.render(index),
        title=title,
        color_mode=state.color_mode,
        parent_id=state.parent_id,
    )
    state.published = True
    _record(state, "publish", index=index, title=title, rationale=rationale)
    return record
