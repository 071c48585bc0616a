"""Live pipeline wiring: capture -> detect/classify -> engine -> generation,
with a broadcast fan-out for display clients.

Frames travel through a latest-wins slot (a laggy consumer sees the freshest
frame, never a backlog); engine events travel through an ordered lossless
queue. The engine itself runs on one thread; poem generation runs on another
so the frame path never blocks on the language model.
"""

from __future__ import annotations

import logging
import queue
import statistics
import threading
import time
from dataclasses import replace

from . import engine as eng
from .affect import load_lexicon
from .bpe import Tokenizer, load_tokenizer
from .classifier import ClassifierModel, classify, load_classifier, preprocess_face
from .config import GatewayConfig
from .detect import CascadeModel, detect_multiscale, largest_box, load_cascade
from .engine import (
    ClearDisplay,
    Display,
    EngineConfig,
    PoemFailed,
    PoemReady,
    RequestPoem,
    RequestSeed,
    Tick,
)
from .errors import DuplicateId, MirrorError, ModelLoadFailure
from .frames import open_source, to_grayscale
from .lm import LmModel, load_lm
from .mrw import load_container
from .poems import generate_poem, make_session_nonce, poem_to_dict
from .store import PoemArchive, SessionLog

log = logging.getLogger(__name__)


class LatestSlot:
    """Single-item handoff where a new frame replaces an unconsumed one."""

    def __init__(self):
        self._item = None
        self._cond = threading.Condition()

    def put(self, item):
        with self._cond:
            self._item = item
            self._cond.notify()

    def get(self, timeout: float):
        with self._cond:
            if self._item is None:
                self._cond.wait(timeout)
            item, self._item = self._item, None
            return item


class Runtime:
    """Owns the models, the worker threads, and the shared status snapshot."""

    def __init__(self, config: GatewayConfig, publish=None):
        self.config = config
        self.publish = publish or (lambda kind, payload, ts: None)
        try:
            self.cascade: CascadeModel = load_cascade(config.cascade_path.read_bytes())
            self.classifier: ClassifierModel = load_classifier(
                load_container(config.classifier_path.read_bytes())
            )
            self.lexicon = load_lexicon(config.lexicon_path.read_text(encoding="utf-8"))
            self.lm: LmModel | None = None
            self.tokenizer: Tokenizer | None = None
            if config.lm_path is not None:
                self.lm = load_lm(load_container(config.lm_path.read_bytes()))
                self.tokenizer = load_tokenizer(
                    config.vocab_path.read_bytes(), config.merges_path.read_bytes()
                )
        except (MirrorError, OSError) as e:
            raise ModelLoadFailure(str(e)) from None

        config.log_dir.mkdir(parents=True, exist_ok=True)
        self.archive = PoemArchive(config.archive_dir)
        stamp = time.strftime("%Y%m%d-%H%M%S")
        self.session_log = SessionLog(config.log_dir / f"session-{stamp}.jsonl")

        self._t0 = time.monotonic_ns()
        self.nonce = make_session_nonce()
        self._lock = threading.RLock()
        self.engine_config: EngineConfig = config.engine
        self.state = eng.init(self.engine_config, self.nonce)
        self._events: queue.Queue = queue.Queue()
        self._slot = LatestSlot()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._latencies: list[float] = []
        self._poems_generated = 0
        self._frames_analyzed = 0
        self._started = False

    # --- clock ---------------------------------------------------------------

    def now_ms(self) -> int:
        return (time.monotonic_ns() - self._t0) // 1_000_000

    # --- lifecycle -----------------------------------------------------------

    def start(self):
        if self._started:
            return
        self._started = True
        for name, target in (
            ("capture", self._capture_loop),
            ("analyze", self._analyze_loop),
            ("ticker", self._ticker_loop),
            ("engine", self._engine_loop),
        ):
            t = threading.Thread(target=target, name=f"mirror-{name}", daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self):
        self._stop.set()
        for t in self._threads:
            t.join(timeout=3)
        self.session_log.close()

    # --- workers ---------------------------------------------------------------

    def _capture_loop(self):
        try:
            source = open_source(self.config.source)
        except MirrorError as e:
            log.error("frame source failed: %s", e)
            return
        try:
            while not self._stop.is_set():
                frame = source.next_frame()
                if frame is None:
                    log.info("frame source exhausted")
                    return
                if frame.channels == 3:
                    frame = to_grayscale(frame)
                self._slot.put((frame, self.now_ms()))
        finally:
            source.close()

    def _analyze_loop(self):
        while not self._stop.is_set():
            item = self._slot.get(timeout=0.2)
            if item is None:
                continue
            frame, captured_ms = item
            boxes = detect_multiscale(self.cascade, frame, self.config.detect)
            box = largest_box(boxes)
            now = self.now_ms()
            if box is None:
                self._events.put(eng.FaceLost(now))
                continue
            dist = classify(self.classifier, preprocess_face(frame, box), now)
            done = self.now_ms()
            with self._lock:
                self._frames_analyzed += 1
                self._latencies.append(float(done - captured_ms))
                if len(self._latencies) > 512:
                    del self._latencies[:256]
            self._events.put(eng.FaceObserved(done, box, dist.probs))

    def _ticker_loop(self):
        beat = 0
        interval = self.config.tick_ms / 1000.0
        while not self._stop.wait(interval):
            now = self.now_ms()
            self._events.put(Tick(now))
            beat += 1
            if beat % 8 == 0:
                self.publish("heartbeat", {"uptime_ms": now}, now)

    def _engine_loop(self):
        while not self._stop.is_set():
            try:
                event = self._events.get(timeout=0.2)
            except queue.Empty:
                continue
            with self._lock:
                # producers race on the clock; the engine's view must be ordered
                if event.ts < self.state.last_event_ts:
                    event = replace(event, ts=self.state.last_event_ts)
                config = self.engine_config
                lexicon = self.lexicon
                before = self.state
                self.session_log.append_event(event)
                self.state, actions = eng.step(before, event, config, lexicon)
                after = self.state
            if after.phase != before.phase:
                self.publish("state", {"phase": after.phase, "since": after.phase_since}, event.ts)
            if after.face_present != before.face_present:
                self.publish("presence", {"present": after.face_present}, event.ts)
            for action in actions:
                self._run_action(action)

    def _run_action(self, action):
        if isinstance(action, RequestSeed):
            pass  # the ENGAGED state event already tells the display
        elif isinstance(action, RequestPoem):
            threading.Thread(
                target=self._generate, args=(action,), name="mirror-generate", daemon=True
            ).start()
        elif isinstance(action, Display):
            try:
                self.archive.archive_poem(action.poem)
            except DuplicateId:
                log.warning("poem %s already archived", action.poem.id)
            with self._lock:
                self._poems_generated += 1
            self.publish("poem", poem_to_dict(action.poem), action.ts)
        elif isinstance(action, ClearDisplay):
            self.publish("poem", None, action.ts)

    def _generate(self, request: RequestPoem):
        sel = request.selection
        with self._lock:
            params = replace(self.engine_config.sampling, rng_seed=sel.rng_seed)
        backend = self.lm if self.lm is not None else "template"
        try:
            poem = generate_poem(
                backend,
                self.tokenizer,
                sel,
                params,
                self.config.prompt_template,
                created_at=request.ts,
            )
            self._events.put(PoemReady(self.now_ms(), poem))
        except Exception as e:  # any failure degrades to the template fallback
            log.warning("generation failed: %s", e)
            self._events.put(PoemFailed(self.now_ms(), str(e)))

    # --- control surface -------------------------------------------------------

    def snapshot(self) -> dict:
        with self._lock:
            lat = sorted(self._latencies)
            state = self.state
            cfg = self.engine_config
            return {
                "phase": state.phase,
                "phase_since": state.phase_since,
                "face_present": state.face_present,
                "uptime_ms": self.now_ms(),
                "poems_generated": self._poems_generated,
                "frames_analyzed": self._frames_analyzed,
                "frame_label_latency_ms": {
                    "median": statistics.median(lat) if lat else None,
                    "p90": lat[int(0.9 * (len(lat) - 1))] if lat else None,
                    "count": len(lat),
                },
                "engine": {
                    "engage_after_ms": cfg.engage_after_ms,
                    "presence_grace_ms": cfg.presence_grace_ms,
                    "present_for_ms": cfg.present_for_ms,
                    "cooldown_ms": cfg.cooldown_ms,
                    "generate_on_neutral": cfg.generate_on_neutral,
                    "ema_alpha": cfg.ema_alpha,
                    "label_margin": cfg.label_margin,
                    "label_dwell_ms": cfg.label_dwell_ms,
                    "intensity_threshold": cfg.intensity_threshold,
                },
                "sampling": {
                    "temperature": cfg.sampling.temperature,
                    "top_k": cfg.sampling.top_k,
                    "top_p": cfg.sampling.top_p,
                    "max_tokens": cfg.sampling.max_tokens,
                },
                "backend": "transformer" if self.lm is not None else "template",
                "active_poem": poem_to_dict(state.active_poem) if state.active_poem else None,
            }

    def update_engine_config(self, changes: dict, sampling_changes: dict, reload_lexicon: bool):
        with self._lock:
            cfg = self.engine_config
            sampling = replace(cfg.sampling, **sampling_changes) if sampling_changes else cfg.sampling
            self.engine_config = replace(cfg, sampling=sampling, **changes)
            if reload_lexicon:
                self.lexicon = load_lexicon(
                    self.config.lexicon_path.read_text(encoding="utf-8")
                )
