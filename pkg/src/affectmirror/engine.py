"""Session state machine: presence -> engagement -> generation -> presentation
-> cooldown.

The engine is strictly event-driven: time only enters through event
timestamps, never through clock reads, so replaying a recorded event stream
reproduces the exact state and action trace. Affect smoothing runs inside the
engine (fed by the distributions on FaceObserved events) to keep the whole
interaction loop a pure function of the event log.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .affect import (
    AffectState,
    Lexicon,
    SeedSelection,
    pick_seed_word,
    smooth_ema,
    stable_label,
)
from .classifier import EmotionDistribution
from .detect import FaceBox
from .errors import StaleEvent
from .poems import Poem, SamplingParams, make_template_poem, mix_seed

PHASES = ("IDLE", "ENGAGED", "GENERATING", "PRESENTING", "COOLDOWN")


@dataclass(frozen=True)
class EngineConfig:
    engage_after_ms: int = 1500
    presence_grace_ms: int = 2000
    present_for_ms: int = 30000
    cooldown_ms: int = 10000
    generate_on_neutral: bool = True
    ema_alpha: float = 0.3
    label_margin: float = 0.15
    label_dwell_ms: int = 1200
    intensity_threshold: float = 0.6
    sampling: SamplingParams = SamplingParams()

    def __post_init__(self):
        for name in ("engage_after_ms", "presence_grace_ms", "present_for_ms", "cooldown_ms", "label_dwell_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must be in [0, 1]")
        if self.label_margin < 0:
            raise ValueError("label_margin must be >= 0")


# --- events ------------------------------------------------------------------


@dataclass(frozen=True)
class FaceObserved:
    ts: int
    box: FaceBox
    dist: tuple[float, ...]


@dataclass(frozen=True)
class FaceLost:
    ts: int


@dataclass(frozen=True)
class PoemReady:
    ts: int
    poem: Poem


@dataclass(frozen=True)
class PoemFailed:
    ts: int
    reason: str


@dataclass(frozen=True)
class Tick:
    ts: int


EngineEvent = FaceObserved | FaceLost | PoemReady | PoemFailed | Tick


# --- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class RequestSeed:
    ts: int


@dataclass(frozen=True)
class RequestPoem:
    ts: int
    selection: SeedSelection


@dataclass(frozen=True)
class Display:
    ts: int
    poem: Poem


@dataclass(frozen=True)
class ClearDisplay:
    ts: int


Action = RequestSeed | RequestPoem | Display | ClearDisplay


def action_to_dict(action: Action) -> dict:
    """Stable JSON form used by the simulate trace and the tests."""
    if isinstance(action, RequestSeed):
        return {"ts": action.ts, "action": "RequestSeed"}
    if isinstance(action, RequestPoem):
        sel = action.selection
        return {
            "ts": action.ts,
            "action": "RequestPoem",
            "label": sel.label,
            "intensity": sel.intensity,
            "word": sel.word,
            "rng_seed": sel.rng_seed,
        }
    if isinstance(action, Display):
        from .poems import poem_to_dict

        return {"ts": action.ts, "action": "Display", "poem": poem_to_dict(action.poem)}
    if isinstance(action, ClearDisplay):
        return {"ts": action.ts, "action": "ClearDisplay"}
    raise TypeError(f"not an action: {action!r}")


# --- state -------------------------------------------------------------------


@dataclass(frozen=True)
class SessionState:
    phase: str = "IDLE"
    phase_since: int = 0
    face_present: bool = False
    face_since: int | None = None
    face_last_seen: int | None = None
    active_poem: Poem | None = None
    session_nonce: int = 0
    affect: AffectState = field(default_factory=AffectState)
    pending_selection: SeedSelection | None = None
    engagement_count: int = 0
    last_event_ts: int = 0


def init(config: EngineConfig, nonce: int) -> SessionState:
    _ = config  # validated by its own constructor
    return SessionState(session_nonce=nonce)


def step(
    state: SessionState,
    event: EngineEvent,
    config: EngineConfig,
    lexicon: Lexicon,
) -> tuple[SessionState, list[Action]]:
    """One pure transition. Raises StaleEvent on timestamp regression."""
    ts = event.ts
    if ts < state.last_event_ts:
        raise StaleEvent(f"event at {ts} after state reached {state.last_event_ts}")
    s = replace(state, last_event_ts=ts)
    actions: list[Action] = []

    # presence bookkeeping: observations refresh presence; anything else lets
    # it lapse once the grace period has passed without a sighting
    if isinstance(event, FaceObserved):
        s = replace(
            s,
            face_present=True,
            face_last_seen=ts,
            face_since=s.face_since if s.face_since is not None else ts,
            affect=smooth_ema(
                s.affect, EmotionDistribution(event.dist, ts), config.ema_alpha
            ),
        )
    else:
        if s.face_last_seen is None or ts - s.face_last_seen > config.presence_grace_ms:
            s = replace(s, face_present=False, face_since=None)

    if s.phase == "IDLE":
        if not s.face_present and state.face_present:
            s = replace(s, affect=AffectState())  # stale readings must not leak
        if s.face_present and s.face_since is not None and ts - s.face_since >= config.engage_after_ms:
            s = replace(s, phase="ENGAGED", phase_since=ts)
            actions.append(RequestSeed(ts))

    elif s.phase == "ENGAGED":
        if not s.face_present:
            s = replace(s, phase="IDLE", phase_since=ts, affect=AffectState())
        else:
            affect, label = stable_label(
                s.affect, config.label_margin, config.label_dwell_ms, ts
            )
            s = replace(s, affect=affect)
            if label is not None and (label != "neutral" or config.generate_on_neutral):
                seed = mix_seed(s.session_nonce, s.engagement_count, ts)
                sel = pick_seed_word(
                    lexicon, label, affect.ema, seed, config.intensity_threshold
                )
                s = replace(
                    s,
                    phase="GENERATING",
                    phase_since=ts,
                    pending_selection=sel,
                    engagement_count=s.engagement_count + 1,
                )
                actions.append(RequestPoem(ts, sel))

    elif s.phase == "GENERATING":
        if isinstance(event, PoemReady):
            s = replace(s, phase="PRESENTING", phase_since=ts, active_poem=event.poem)
            actions.append(Display(ts, event.poem))
        elif isinstance(event, PoemFailed):
            sel = s.pending_selection
            assert sel is not None, "PoemFailed without a pending selection"
            params = replace(config.sampling, rng_seed=sel.rng_seed)
            poem = make_template_poem(sel, params, created_at=ts)
            s = replace(s, phase="PRESENTING", phase_since=ts, active_poem=poem)
            actions.append(Display(ts, poem))
        # a viewer walking away mid-generation is handled once PRESENTING

    elif s.phase == "PRESENTING":
        if ts - s.phase_since >= config.present_for_ms or not s.face_present:
            s = replace(
                s, phase="COOLDOWN", phase_since=ts, active_poem=None, pending_selection=None
            )
            actions.append(ClearDisplay(ts))

    elif s.phase == "COOLDOWN":
        if ts - s.phase_since >= config.cooldown_ms:
            s = replace(s, phase="IDLE", phase_since=ts, affect=AffectState())

    return s, actions


def run_trace(
    events: list[EngineEvent],
    config: EngineConfig,
    lexicon: Lexicon,
    nonce: int = 0,
    respond_to_poem_requests: bool = True,
) -> list[Action]:
    """Replay events through a fresh engine and collect the action trace.

    With respond_to_poem_requests, each RequestPoem is answered immediately by
    a template-backend PoemReady at the same timestamp, closing the loop the
    way the live pipeline's generator worker would (but instantaneously).
    """
    state = init(config, nonce)
    trace: list[Action] = []
    queue = list(events)
    i = 0
    while i < len(queue):
        event = queue[i]
        i += 1
        state, actions = step(state, event, config, lexicon)
        trace.extend(actions)
        if respond_to_poem_requests:
            for action in actions:
                if isinstance(action, RequestPoem):
                    params = replace(config.sampling, rng_seed=action.selection.rng_seed)
                    poem = make_template_poem(action.selection, params, created_at=action.ts)
                    queue.insert(i, PoemReady(action.ts, poem))
    return trace
