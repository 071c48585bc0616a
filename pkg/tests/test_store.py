import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectmirror.affect import SeedSelection
from affectmirror.detect import FaceBox
from affectmirror.engine import (
    EngineConfig,
    FaceLost,
    FaceObserved,
    PoemFailed,
    PoemReady,
    Tick,
    run_trace,
)
from affectmirror.errors import CorruptRecord, DuplicateId, IoFailure
from affectmirror.poems import SamplingParams, make_template_poem
from affectmirror.store import (
    PoemArchive,
    SessionLog,
    event_from_dict,
    event_to_dict,
    replay,
)


def sample_poem(seed=3, created=50):
    sel = SeedSelection("fear", "low", "shadow", seed)
    return make_template_poem(sel, SamplingParams(rng_seed=seed), created_at=created)


def sample_events():
    return [
        FaceObserved(10, FaceBox(1, 2, 30, 30, 4, 0.5), (0.1, 0.1, 0.1, 0.4, 0.1, 0.1, 0.1)),
        Tick(20),
        FaceLost(30),
        PoemReady(40, sample_poem()),
        PoemFailed(55, "boom"),
    ]


class TestEventCodec:
    def test_roundtrip_each_kind(self):
        for event in sample_events():
            assert event_from_dict(event_to_dict(event)) == event

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            event_from_dict({"ts": 1, "event": "Earthquake"})


class TestSessionLog:
    def test_append_three_lines(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with SessionLog(path) as log:
            for e in sample_events()[:3]:
                log.append_event(e)
        assert len(path.read_text().splitlines()) == 3

    def test_unwritable_path_fails(self, tmp_path):
        with pytest.raises(IoFailure):
            SessionLog(tmp_path / "no" / "such" / "dir" / "log.jsonl")

    def test_replay_roundtrip(self, tmp_path):
        path = tmp_path / "log.jsonl"
        events = sample_events()
        with SessionLog(path) as log:
            for e in events:
                log.append_event(e)
        assert replay(path) == events

    def test_truncated_tail_skipped_then_appendable(self, tmp_path, caplog):
        path = tmp_path / "log.jsonl"
        events = sample_events()[:2]
        with SessionLog(path) as log:
            for e in events:
                log.append_event(e)
        with open(path, "a") as fh:
            fh.write('{"ts": 99, "event": "Ti')  # crash mid-write
        with caplog.at_level("WARNING"):
            assert replay(path) == events
        assert any("truncated" in r.message for r in caplog.records)
        with SessionLog(path) as log:
            log.append_event(Tick(100))
        # reopening dropped the unacknowledged torn tail; the log replays clean
        lines = path.read_text().splitlines()
        assert json.loads(lines[-1])["ts"] == 100
        assert replay(path) == events + [Tick(100)]

    def test_malformed_middle_line(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with SessionLog(path) as log:
            log.append_event(Tick(1))
        with open(path, "a") as fh:
            fh.write("garbage\n")
        with SessionLog(path) as log:
            log.append_event(Tick(2))
        with pytest.raises(CorruptRecord):
            replay(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            replay(tmp_path / "absent.jsonl")


EVENT_STRATEGY = st.one_of(
    st.builds(Tick, st.integers(0, 10_000)),
    st.builds(FaceLost, st.integers(0, 10_000)),
    st.builds(
        FaceObserved,
        st.integers(0, 10_000),
        st.builds(
            FaceBox,
            st.integers(0, 100), st.integers(0, 100),
            st.integers(1, 60), st.integers(1, 60),
            st.integers(0, 9), st.floats(-5, 5, allow_nan=False),
        ),
        st.lists(st.floats(0.01, 1.0), min_size=7, max_size=7).map(
            lambda v: tuple(x / sum(v) for x in v)
        ),
    ),
    st.builds(PoemFailed, st.integers(0, 10_000), st.text(max_size=20)),
    st.builds(
        PoemReady,
        st.integers(0, 10_000),
        st.integers(0, 2**32).map(lambda s: sample_poem(seed=s, created=s % 997)),
    ),
)


class TestRoundTripProperty:
    @given(st.lists(EVENT_STRATEGY, max_size=40))
    @settings(max_examples=30, deadline=None)
    def test_write_replay_exact(self, events):
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "log.jsonl")
            with SessionLog(path) as log:
                for e in events:
                    log.append_event(e)
            assert replay(path) == events

    def test_replayed_trace_matches_live(self, tmp_path):
        config = EngineConfig(
            engage_after_ms=300, presence_grace_ms=200, present_for_ms=1000,
            cooldown_ms=500, label_dwell_ms=100, ema_alpha=1.0,
        )
        box = FaceBox(10, 10, 48, 48, 3, 1.0)
        happy = (0.05, 0.05, 0.05, 0.6, 0.05, 0.1, 0.1)
        events = [FaceObserved(t, box, happy) for t in range(0, 801, 100)]
        events += [Tick(t) for t in range(900, 2600, 100)]
        from affectmirror.config import assets_dir
        from affectmirror.affect import load_lexicon

        lexicon = load_lexicon((assets_dir() / "lexicon.txt").read_text(encoding="utf-8"))
        live = run_trace(events, config, lexicon, nonce=13)
        path = tmp_path / "log.jsonl"
        with SessionLog(path) as log:
            for e in events:
                log.append_event(e)
        replayed = run_trace(replay(path), config, lexicon, nonce=13)
        assert replayed == live


class TestArchive:
    def test_sequence_starts_at_one(self, tmp_path):
        archive = PoemArchive(tmp_path / "arch")
        rec = archive.archive_poem(sample_poem(1))
        assert rec.sequence == 1

    def test_sequences_monotone_without_gaps(self, tmp_path):
        archive = PoemArchive(tmp_path / "arch")
        seqs = [archive.archive_poem(sample_poem(s)).sequence for s in range(5)]
        assert seqs == [1, 2, 3, 4, 5]

    def test_duplicate_id(self, tmp_path):
        archive = PoemArchive(tmp_path / "arch")
        poem = sample_poem(9)
        archive.archive_poem(poem)
        with pytest.raises(DuplicateId):
            archive.archive_poem(poem)

    def test_get_and_index(self, tmp_path):
        archive = PoemArchive(tmp_path / "arch")
        poems = [sample_poem(s, created=s * 10) for s in range(3)]
        for p in poems:
            archive.archive_poem(p)
        idx = archive.index()
        assert [(s, pid) for s, pid, _ in idx] == [(i + 1, p.id) for i, p in enumerate(poems)]
        assert archive.get(poems[1].id) == poems[1]

    def test_reopen_continues_sequence(self, tmp_path):
        root = tmp_path / "arch"
        PoemArchive(root).archive_poem(sample_poem(1))
        rec = PoemArchive(root).archive_poem(sample_poem(2))
        assert rec.sequence == 2

    def test_get_unknown(self, tmp_path):
        with pytest.raises(KeyError):
            PoemArchive(tmp_path / "arch").get("nope")
