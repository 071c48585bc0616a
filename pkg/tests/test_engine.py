import pytest

from affectmirror.detect import FaceBox
from affectmirror.engine import (
    ClearDisplay,
    Display,
    EngineConfig,
    FaceLost,
    FaceObserved,
    PoemFailed,
    PoemReady,
    RequestPoem,
    RequestSeed,
    Tick,
    action_to_dict,
    init,
    run_trace,
    step,
)
from affectmirror.errors import StaleEvent
from affectmirror.poems import SamplingParams, make_template_poem

BOX = FaceBox(40, 40, 48, 48, 5, 1.0)
HAPPY = (0.05, 0.05, 0.05, 0.6, 0.05, 0.1, 0.1)
NEUTRAL = (0.05, 0.05, 0.05, 0.1, 0.05, 0.1, 0.6)

FAST = EngineConfig(
    engage_after_ms=300,
    presence_grace_ms=200,
    present_for_ms=1000,
    cooldown_ms=500,
    label_dwell_ms=100,
    ema_alpha=1.0,
)


def drive(config, events, nonce=0, lexicon=None):
    if lexicon is None:
        lexicon = _lexicon()
    state = init(config, nonce)
    trace = []
    for e in events:
        state, actions = step(state, e, config, lexicon)
        trace.extend(actions)
    return state, trace


def drive_responding(config, events, nonce=0):
    """Like drive(), but answers each RequestPoem with an immediate
    template-backend PoemReady, the way run_trace does."""
    lexicon = _lexicon()
    state = init(config, nonce)
    trace = []
    queue = list(events)
    i = 0
    while i < len(queue):
        e = queue[i]
        i += 1
        state, actions = step(state, e, config, lexicon)
        trace.extend(actions)
        for a in actions:
            if isinstance(a, RequestPoem):
                poem = make_template_poem(
                    a.selection, SamplingParams(rng_seed=a.selection.rng_seed), a.ts
                )
                queue.insert(i, PoemReady(a.ts, poem))
    return state, trace


def _lexicon():
    from affectmirror.config import assets_dir
    from affectmirror.affect import load_lexicon

    return load_lexicon((assets_dir() / "lexicon.txt").read_text(encoding="utf-8"))


def observed(ts, dist=HAPPY):
    return FaceObserved(ts, BOX, dist)


class TestConfig:
    def test_defaults_valid(self):
        cfg = EngineConfig()
        assert cfg.engage_after_ms == 1500 and cfg.present_for_ms == 30000

    def test_zero_duration_rejected(self):
        with pytest.raises(ValueError):
            EngineConfig(cooldown_ms=0)

    def test_init_is_pure(self):
        a = init(FAST, nonce=9)
        b = init(FAST, nonce=9)
        assert a == b and a.phase == "IDLE" and a.active_poem is None


class TestEngagement:
    def test_face_held_engages(self):
        events = [observed(t) for t in range(0, 401, 100)]
        state, trace = drive(FAST, events)
        assert state.phase in ("ENGAGED", "GENERATING")
        assert any(isinstance(a, RequestSeed) for a in trace)
        seed_ts = next(a.ts for a in trace if isinstance(a, RequestSeed))
        assert seed_ts == 300

    def test_blip_does_not_engage(self):
        events = [observed(0), observed(100), Tick(400), Tick(900)]
        state, _ = drive(FAST, events)
        assert state.phase == "IDLE"
        assert not state.face_present

    def test_full_cycle_trace(self):
        events = [observed(t) for t in range(0, 801, 100)]
        events += [Tick(t) for t in range(900, 2600, 100)]
        state, trace = drive_responding(FAST, events)
        kinds = [type(a).__name__ for a in trace]
        assert kinds == ["RequestSeed", "RequestPoem", "Display", "ClearDisplay"]
        assert state.phase in ("COOLDOWN", "IDLE")

    def test_neutral_gating(self):
        config = EngineConfig(
            engage_after_ms=300, presence_grace_ms=200, present_for_ms=1000,
            cooldown_ms=500, label_dwell_ms=100, ema_alpha=1.0,
            generate_on_neutral=False,
        )
        events = [observed(t, NEUTRAL) for t in range(0, 1001, 100)]
        state, trace = drive(config, events)
        assert state.phase == "ENGAGED"
        assert not any(isinstance(a, RequestPoem) for a in trace)
        # flipping the switch lets neutral seed a poem
        state, trace = drive(FAST, [observed(t, NEUTRAL) for t in range(0, 1001, 100)])
        assert any(isinstance(a, RequestPoem) for a in trace)


class TestGenerating:
    def engaged_to_generating(self):
        events = [observed(t) for t in range(0, 801, 100)]
        state, trace = drive(FAST, events)
        assert state.phase == "GENERATING"
        request = next(a for a in trace if isinstance(a, RequestPoem))
        return state, request

    def test_poem_ready_presents(self):
        state, request = self.engaged_to_generating()
        poem = make_template_poem(
            request.selection, SamplingParams(rng_seed=request.selection.rng_seed), 900
        )
        state, actions = step(state, PoemReady(900, poem), FAST, _lexicon())
        assert state.phase == "PRESENTING" and state.active_poem == poem
        assert actions == [Display(900, poem)]

    def test_poem_failed_falls_back_to_template(self):
        state, request = self.engaged_to_generating()
        state, actions = step(state, PoemFailed(900, "weights on fire"), FAST, _lexicon())
        assert state.phase == "PRESENTING"
        assert len(actions) == 1 and isinstance(actions[0], Display)
        assert actions[0].poem.backend == "template"
        assert actions[0].poem.seed_word == request.selection.word

    def test_single_request_per_cycle(self):
        events = [observed(t) for t in range(0, 3001, 100)]
        _, trace = drive(FAST, events)
        assert sum(isinstance(a, RequestPoem) for a in trace) == 1


class TestPresenting:
    def presenting_state(self):
        events = [observed(t) for t in range(0, 801, 100)]
        state, trace = drive(FAST, events)
        request = next(a for a in trace if isinstance(a, RequestPoem))
        poem = make_template_poem(request.selection, SamplingParams(), 900)
        state, _ = step(state, PoemReady(900, poem), FAST, _lexicon())
        return state

    def test_expires_after_present_for(self):
        state = self.presenting_state()
        state, actions = step(state, observed(1899), FAST, _lexicon())
        assert state.phase == "PRESENTING" and actions == []
        state, actions = step(state, observed(1900), FAST, _lexicon())
        assert state.phase == "COOLDOWN"
        assert actions == [ClearDisplay(1900)]
        assert state.active_poem is None

    def test_face_lost_beyond_grace_clears(self):
        state = self.presenting_state()  # face last seen at 800
        state, actions = step(state, Tick(1100), FAST, _lexicon())
        assert state.phase == "COOLDOWN" and isinstance(actions[0], ClearDisplay)

    def test_active_poem_only_while_presenting(self):
        state = self.presenting_state()
        assert state.phase == "PRESENTING" and state.active_poem is not None
        state, _ = step(state, Tick(1901), FAST, _lexicon())
        assert state.phase == "COOLDOWN" and state.active_poem is None


class TestCooldown:
    def test_cooldown_then_idle(self):
        events = [observed(t) for t in range(0, 801, 100)]
        events += [Tick(t) for t in range(900, 1300, 100)]
        state, _ = drive_responding(FAST, events)
        assert state.phase == "COOLDOWN"  # face lapsed at ~1100
        state, actions = step(state, Tick(1400), FAST, _lexicon())
        assert state.phase == "COOLDOWN"  # 500 ms not yet elapsed
        state, actions = step(state, Tick(5000), FAST, _lexicon())
        assert state.phase == "IDLE" and actions == []

    def test_no_display_during_cooldown(self):
        # keep the face present the whole time; the engine must still pass
        # through a full cooldown before engaging again
        events = [observed(t) for t in range(0, 4001, 100)]
        state, trace = drive_responding(FAST, events)
        displays = [a for a in trace if isinstance(a, Display)]
        clears = [a for a in trace if isinstance(a, ClearDisplay)]
        assert len(displays) >= 1 and len(clears) >= 1
        cool_start = clears[0].ts
        cool_end = cool_start + FAST.cooldown_ms
        assert not any(cool_start < d.ts < cool_end for d in displays)


class TestDeterminismAndStaleness:
    def test_stale_event_rejected(self):
        state = init(FAST, 0)
        state, _ = step(state, Tick(100), FAST, _lexicon())
        with pytest.raises(StaleEvent):
            step(state, Tick(99), FAST, _lexicon())

    def test_replay_reproduces_trace(self):
        events = [observed(t) for t in range(0, 801, 100)]
        events += [FaceLost(t) for t in range(900, 1400, 100)]
        events += [Tick(t) for t in range(1400, 3000, 100)]
        t1 = run_trace(events, FAST, _lexicon(), nonce=77)
        t2 = run_trace(events, FAST, _lexicon(), nonce=77)
        assert t1 == t2
        assert [action_to_dict(a) for a in t1] == [action_to_dict(a) for a in t2]

    def test_nonce_changes_seeds_not_structure(self):
        events = [observed(t) for t in range(0, 801, 100)]
        a = run_trace(events, FAST, _lexicon(), nonce=1)
        b = run_trace(events, FAST, _lexicon(), nonce=2)
        assert [type(x).__name__ for x in a] == [type(x).__name__ for x in b]
        sa = next(x.selection.rng_seed for x in a if isinstance(x, RequestPoem))
        sb = next(x.selection.rng_seed for x in b if isinstance(x, RequestPoem))
        assert sa != sb

    def test_engagement_seeds_unique_across_cycles(self):
        events = [observed(t) for t in range(0, 8001, 100)]
        trace = run_trace(events, FAST, _lexicon(), nonce=5)
        seeds = [a.selection.rng_seed for a in trace if isinstance(a, RequestPoem)]
        assert len(seeds) >= 2
        assert len(set(seeds)) == len(seeds)
