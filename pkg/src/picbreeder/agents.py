"""The decision-makers driving sessions.

A uniform-random agent (the provider-free lower bound), an epsilon-greedy
wrapper that injects structured random selections, a chat-model-backed
agent with a configurable context window and optional personality trait,
and the trait-pool generator.  Agents share one surface: branch, select,
publish, and rate decisions, each returning the decision plus rationale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from random import Random

from . import cppn
from .archive import Archive, ArchiveSample
from .providers import (
    BranchReply,
    ChatMessage,
    ParseError,
    ProviderError,
    PublishReply,
    RatingsReply,
    SelectReply,
    ToggleReply,
    parse_reply,
)
from .session import Publish, Select, SessionState, ToggleColor

log = logging.getLogger(__name__)

# Per-step probabilities of a structured random selection action.
P_TOGGLE = 0.1
P_MODE = 0.2
P_STRENGTH = 0.2

_MODES = ("structure-only", "color-only", "both")


@dataclass(frozen=True)
class AgentSpec:
    kind: str = "random"                 # random | chat | scripted | human
    epsilon: float = 0.0
    context_length: int | str = 1        # turns of history, or "full"
    personality: str | None = None
    model: str = ""

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon {self.epsilon} outside [0, 1]")
        if self.context_length != "full" and int(self.context_length) < 0:
            raise ValueError("context_length must be nonnegative or 'full'")


@dataclass(frozen=True)
class BranchChoice:
    entry_id: int | None = None          # None means start fresh

    @property
    def fresh(self) -> bool:
        return self.entry_id is None


def load_prompt(name: str) -> str:
    return (resources.files("picbreeder.assets") / "prompts" / f"{name}.txt"
            ).read_text(encoding="utf-8")


def random_branch(sample: ArchiveSample | None, rng: Random) -> BranchChoice:
    """Uniform over {fresh} plus every id in the presented sample."""
    ids = sample.all_ids() if sample is not None else ()
    options: list[int | None] = [None, *ids]
    return BranchChoice(options[rng.randrange(len(options))])


def random_select(state: SessionState, rng: Random):
    """The structured random selection action.

    Toggles color with probability 0.1 (forgoing a parent); otherwise picks
    one uniform parent, attaching a random mutation mode with probability
    0.2 (color mode permitting) and a random strength with probability 0.2.
    """
    toggle = rng.random() < P_TOGGLE
    can_toggle = state.consecutive_toggles < state.config.max_consecutive_toggles
    if toggle and can_toggle:
        return ToggleColor()
    index = rng.randrange(len(state.population))
    mode = None
    if state.color_mode and rng.random() < P_MODE:
        mode = _MODES[rng.randrange(len(_MODES))]
    strength = None
    if rng.random() < P_STRENGTH:
        strength = min(max(rng.random(), 0.01), 1.0)
    return Select((index,), strength, mode)


class Agent:
    """Decision surface shared by all agent kinds."""

    name = "agent"

    def begin_session(self, session_index: int, personality: str | None = None) -> None:
        """Reset any per-session context before a new session starts."""

    def decide_branch(self, sample: ArchiveSample | None, archive: Archive,
                      rng: Random) -> tuple[BranchChoice, str]:
        raise NotImplementedError

    def decide_select(self, state: SessionState, rng: Random):
        raise NotImplementedError

    def decide_publish(self, state: SessionState, rng: Random) -> tuple[Publish, str]:
        raise NotImplementedError

    def decide_ratings(self, entry_ids, archive: Archive,
                       rng: Random) -> tuple[dict[int, int], str]:
        raise NotImplementedError


class RandomAgent(Agent):
    """Uniform decisions everywhere; the provider-free baseline."""

    name = "random"

    def __init__(self):
        self._session_index = 0

    def begin_session(self, session_index: int, personality: str | None = None) -> None:
        self._session_index = session_index

    def decide_branch(self, sample, archive, rng):
        return random_branch(sample, rng), ""

    def decide_select(self, state, rng):
        return random_select(state, rng), ""

    def decide_publish(self, state, rng):
        index = rng.randrange(len(state.population))
        return Publish(index, f"untitled-{self._session_index}"), ""

    def decide_ratings(self, entry_ids, archive, rng):
        return {entry_id: rng.randint(1, 5) for entry_id in entry_ids}, ""


class EpsilonGreedyAgent(Agent):
    """Replaces the inner agent's selection with a random action w.p. epsilon.

    Branching, publication, and rating always go to the inner agent, even at
    epsilon = 1.
    """

    def __init__(self, inner: Agent, epsilon: float):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon {epsilon} outside [0, 1]")
        self.inner = inner
        self.epsilon = epsilon
        self.name = f"eps{epsilon}-{inner.name}"

    def begin_session(self, session_index, personality=None):
        self.inner.begin_session(session_index, personality)

    def decide_branch(self, sample, archive, rng):
        return self.inner.decide_branch(sample, archive, rng)

    def decide_select(self, state, rng):
        if self.epsilon > 0.0 and rng.random() < self.epsilon:
            return random_select(state, rng), ""
        return self.inner.decide_select(state, rng)

    def decide_publish(self, state, rng):
        return self.inner.decide_publish(state, rng)

    def decide_ratings(self, entry_ids, archive, rng):
        return self.inner.decide_ratings(entry_ids, archive, rng)


class ScriptedAgent(Agent):
    """Plays back a fixed decision list; for tests and deterministic demos."""

    name = "scripted"

    def __init__(self, decisions):
        self.decisions = list(decisions)

    def _next(self):
        if not self.decisions:
            raise RuntimeError("scripted agent ran out of decisions")
        return self.decisions.pop(0)

    def decide_branch(self, sample, archive, rng):
        return self._next(), ""

    def decide_select(self, state, rng):
        return self._next(), ""

    def decide_publish(self, state, rng):
        return self._next(), ""

    def decide_ratings(self, entry_ids, archive, rng):
        return self._next(), ""


class ChatAgent(Agent):
    """Chat-model-backed player.

    Keeps the running session as (user message, assistant reply) turns and
    replays the last `context_length` of them to the provider each step;
    "full" (or >= 20) keeps the whole session including the branching
    sample, and appends the novelty addendum at publication.  Malformed
    replies are retried up to 3 times, then the decision degrades to the
    structured random fallback and the event is logged.
    """

    MAX_ATTEMPTS = 3

    def __init__(self, provider, spec: AgentSpec, name: str = "chat"):
        self.provider = provider
        self.spec = spec
        self.name = name
        self.system_prompt = load_prompt("system_prompt")
        self.novelty_addendum = load_prompt("novelty_addendum")
        self.personality: str | None = spec.personality
        self.degradations: list[str] = []
        self._turns: list[tuple[ChatMessage, str]] = []
        self._session_index = 0

    @property
    def full_history(self) -> bool:
        cl = self.spec.context_length
        return cl == "full" or int(cl) >= 20

    def begin_session(self, session_index, personality=None):
        self._session_index = session_index
        self._turns = []
        if personality is not None:
            self.personality = personality

    # -- message assembly ------------------------------------------------

    def _system_message(self) -> ChatMessage:
        text = self.system_prompt
        if self.personality:
            text = self.personality.rstrip() + "\n\n" + text
        return ChatMessage("system", text)

    def _window(self) -> list[tuple[ChatMessage, str]]:
        if self.full_history:
            return self._turns
        return self._turns[-int(self.spec.context_length):] if int(self.spec.context_length) else []

    def _messages(self, current: ChatMessage) -> list[ChatMessage]:
        messages = [self._system_message()]
        for user_msg, assistant_text in self._window():
            messages.append(user_msg)
            messages.append(ChatMessage("assistant", assistant_text))
        messages.append(current)
        return messages

    def _ask(self, stage: str, current: ChatMessage, presented_count: int):
        """Query, parse, retry; None signals degradation to a random fallback."""
        attempt_msg = current
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                raw = self.provider.complete(self._messages(attempt_msg),
                                             self.spec.model)
                reply = parse_reply(raw, stage, presented_count)
            except (ParseError, ProviderError) as err:
                log.warning("%s reply attempt %d failed at %s: %s",
                            self.name, attempt + 1, stage, err)
                attempt_msg = ChatMessage(
                    "user",
                    current.text + "\n(Your previous reply could not be used: "
                    f"{err}. Reply with exactly one directive line first.)",
                    current.images)
                continue
            self._turns.append((current, raw))
            return reply
        self.degradations.append(stage)
        log.warning("%s degraded to a random %s decision after %d attempts",
                    self.name, stage, self.MAX_ATTEMPTS)
        return None

    @staticmethod
    def _population_images(state: SessionState) -> tuple[bytes, ...]:
        return tuple(cppn.to_png_bytes(buf) for buf in state.render_all())

    @staticmethod
    def _settings_text(state: SessionState) -> str:
        return (f"Generation {state.generation} of "
                f"{state.config.generations_to_publish}. Color mode is "
                f"{'on' if state.color_mode else 'off'}; mutation strength "
                f"{state.params.strength}; mutation mode {state.params.mode}.")

    # -- decisions ---------------------------------------------------------

    def decide_branch(self, sample, archive, rng):
        if sample is None:
            return BranchChoice(None), ""
        ids = sample.all_ids()
        lines = ["The archive sample, by category:"]
        position = 0
        for category, cat_ids in sample.categories().items():
            if cat_ids:
                lines.append(f"{category.replace('_', ' ')}: images "
                             f"{position}-{position + len(cat_ids) - 1}")
                position += len(cat_ids)
        lines.append("Branch one of these images (BRANCH <n>) or start fresh "
                     "(BRANCH FRESH).")
        images = tuple(archive.png_bytes(i) for i in ids)
        current = ChatMessage("user", "\n".join(lines), images)
        reply = self._ask("branch", current, len(ids))
        if reply is None:
            return random_branch(sample, rng), ""
        assert isinstance(reply, BranchReply)
        entry = None if reply.entry_index is None else ids[reply.entry_index]
        return BranchChoice(entry), reply.rationale

    def decide_select(self, state, rng):
        text = (self._settings_text(state)
                + "\nHere are the 15 candidate images, in index order 0-14. "
                  "Select parents, or TOGGLE_COLOR.")
        current = ChatMessage("user", text, self._population_images(state))
        reply = self._ask("select", current, len(state.population))
        if reply is None:
            return random_select(state, rng), ""
        if isinstance(reply, ToggleReply):
            return ToggleColor(), reply.rationale
        assert isinstance(reply, SelectReply)
        return Select(reply.indices, reply.strength, reply.mode), reply.rationale

    def decide_publish(self, state, rng):
        text = (self._settings_text(state)
                + "\nThe session is complete. Publish one of the 15 images "
                  'with a short title: PUBLISH <n> TITLE "<title>".')
        if self.full_history:
            text += "\n" + self.novelty_addendum
        current = ChatMessage("user", text, self._population_images(state))
        reply = self._ask("publish", current, len(state.population))
        if reply is None:
            index = rng.randrange(len(state.population))
            return Publish(index, f"untitled-{self._session_index}"), ""
        assert isinstance(reply, PublishReply)
        return Publish(reply.index, reply.title), reply.rationale

    def decide_ratings(self, entry_ids, archive, rng):
        entry_ids = list(entry_ids)
        text = (f"Rate each of these {len(entry_ids)} archive images with an "
                "integer score from 1 (poor) to 5 (excellent): "
                "RATE <i>=<s>,... using the image indices shown.")
        images = tuple(archive.png_bytes(i) for i in entry_ids)
        current = ChatMessage("user", text, images)
        reply = self._ask("rate", current, len(entry_ids))
        if reply is None:
            return {e: rng.randint(1, 5) for e in entry_ids}, ""
        assert isinstance(reply, RatingsReply)
        return ({entry_ids[i]: score for i, score in reply.scores.items()},
                reply.rationale)


# ----------------------------------------------------------------------
# Personality trait pool
# ----------------------------------------------------------------------

@dataclass
class TraitPool:
    traits: tuple[str, ...]
    complete: bool = True
    active: tuple[str, ...] = field(default=())

    def activate(self, na: int, rng: Random) -> tuple[str, ...]:
        """Fix the experiment's active subset of na traits."""
        if na == 0:
            self.active = ()
        elif na > len(self.traits):
            raise ValueError(f"requested {na} active traits, pool has "
                             f"{len(self.traits)}")
        else:
            self.active = tuple(rng.sample(self.traits, na))
        return self.active

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for trait in self.traits:
                fh.write(trait + "\n")

    @classmethod
    def load(cls, path) -> "TraitPool":
        with open(path, encoding="utf-8") as fh:
            traits = tuple(line.strip() for line in fh if line.strip())
        return cls(traits)


def parse_trait_lines(text: str) -> list[str]:
    """Strip list numbering ("1.", "2)", "- ") from one batch of traits."""
    import re

    traits = []
    for line in text.splitlines():
        line = line.strip()
        line = re.sub(r"^(\d+[\.\)]\s*|[-*]\s+)", "", line).strip()
        if line:
            traits.append(line)
    return traits


def generate_traits(provider, total: int = 1000, batch: int = 50,
                    history: int = 10, model: str = "") -> TraitPool:
    """Build the trait pool in batches, each call seeing the prior `history`
    batches; exact duplicates are dropped.  Provider failure returns the
    partial pool flagged incomplete."""
    system_prompt = load_prompt("system_prompt")
    prompt = load_prompt("traits_prompt").format(
        system_prompt=system_prompt, batch=batch)
    ask = ChatMessage("user", f"Generate the next batch of {batch} traits.")

    batches: list[str] = []
    traits: list[str] = []
    seen: set[str] = set()
    while len(traits) < total:
        messages = [ChatMessage("system", prompt)]
        for prior in batches[-history:]:
            messages.append(ask)
            messages.append(ChatMessage("assistant", prior))
        messages.append(ask)
        try:
            raw = provider.complete(messages, model)
        except ProviderError as err:
            log.warning("trait generation stopped early at %d/%d traits: %s",
                        len(traits), total, err)
            return TraitPool(tuple(traits), complete=False)
        batches.append(raw)
        for trait in parse_trait_lines(raw):
            if trait not in seen:
                seen.add(trait)
                traits.append(trait)
    return TraitPool(tuple(traits[:total]), complete=True)


def assign_personality(pool: TraitPool, rng: Random) -> str | None:
    """Uniform draw from the activated subset; None when no agents are set."""
    if not pool.active:
        return None
    return pool.active[rng.randrange(len(pool.active))]
