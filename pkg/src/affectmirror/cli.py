"""Command line: `run` starts the gateway; the other subcommands are thin
offline clients of the core package (detect / classify / generate / simulate /
bench). Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from pathlib import Path

from .config import ENV_CONFIG, assets_dir, load_config
from .errors import MirrorError


def _cmd_run(args) -> int:
    path = args.config or os.environ.get(ENV_CONFIG)
    if not path:
        print(f"run: no config given and {ENV_CONFIG} unset", file=sys.stderr)
        return 2
    config = load_config(path)
    if args.port is not None:
        config.port = args.port
    if args.host is not None:
        config.host = args.host
    from .service import serve

    serve(config)
    return 0


def _cmd_detect(args) -> int:
    from .detect import DetectParams, detect_multiscale, load_cascade
    from .frames import Frame, read_pnm, to_grayscale

    pixels = read_pnm(Path(args.image).read_bytes())
    frame = Frame(pixels, 0)
    if frame.channels == 3:
        frame = to_grayscale(frame)
    model = load_cascade(Path(args.cascade).read_bytes())
    params = DetectParams(min_neighbors=args.min_neighbors, min_size=args.min_size)
    boxes = detect_multiscale(model, frame, params)
    for b in boxes:
        print(f"{b.x} {b.y} {b.w} {b.h} neighbors={b.neighbors} score={b.score:.4f}")
    if not boxes:
        print("no faces", file=sys.stderr)
    return 0


def _cmd_classify(args) -> int:
    from .classifier import CATEGORIES, classify, load_classifier, preprocess_face
    from .detect import FaceBox
    from .frames import Frame, read_pnm, to_grayscale
    from .mrw import load_container

    pixels = read_pnm(Path(args.image).read_bytes())
    frame = Frame(pixels, 0)
    if frame.channels == 3:
        frame = to_grayscale(frame)
    model = load_classifier(load_container(Path(args.model).read_bytes()))
    box = FaceBox(0, 0, frame.width, frame.height)
    dist = classify(model, preprocess_face(frame, box))
    for name, p in zip(CATEGORIES, dist.probs):
        print(f"{name} {p:.6f}")
    return 0


def _cmd_generate(args) -> int:
    from .affect import load_lexicon, pick_seed_word
    from .classifier import CATEGORIES, category_index
    from .poems import SamplingParams, generate_poem

    if args.emotion not in CATEGORIES:
        print(f"generate: unknown emotion {args.emotion!r}; pick from {', '.join(CATEGORIES)}",
              file=sys.stderr)
        return 2
    lexicon_path = Path(args.lexicon) if args.lexicon else assets_dir() / "lexicon.txt"
    lexicon = load_lexicon(lexicon_path.read_text(encoding="utf-8"))
    ema = [0.02] * 7
    ema[category_index(args.emotion)] = 0.88
    sel = pick_seed_word(lexicon, args.emotion, tuple(ema), args.seed)
    params = SamplingParams(rng_seed=args.seed)
    if args.model:
        from .bpe import load_tokenizer
        from .lm import load_lm
        from .mrw import load_container

        backend = load_lm(load_container(Path(args.model).read_bytes()))
        tok = load_tokenizer(Path(args.vocab).read_bytes(), Path(args.merges).read_bytes())
    else:
        backend, tok = "template", None
    poem = generate_poem(backend, tok, sel, params)
    print(poem.text)
    return 0


def _cmd_simulate(args) -> int:
    from .affect import load_lexicon
    from .engine import EngineConfig, action_to_dict, run_trace
    from .store import replay

    events = replay(args.script)
    lexicon_path = Path(args.lexicon) if args.lexicon else assets_dir() / "lexicon.txt"
    lexicon = load_lexicon(lexicon_path.read_text(encoding="utf-8"))
    config = EngineConfig()
    trace = run_trace(events, config, lexicon, nonce=args.nonce)
    for action in trace:
        print(json.dumps(action_to_dict(action), sort_keys=True))
    return 0


def _cmd_bench(args) -> int:
    import numpy as np

    from .affect import load_lexicon, pick_seed_word
    from .bpe import tiny_tokenizer
    from .classifier import classify, load_classifier, preprocess_face
    from .detect import DetectParams, detect_multiscale, largest_box, load_cascade
    from .fixtures import build_tiny_classifier, build_tiny_lm
    from .frames import Frame, face_pattern
    from .lm import load_lm
    from .poems import SamplingParams, generate_poem

    cascade = load_cascade((assets_dir() / "cascade_fixture.xml").read_bytes())
    classifier = load_classifier(build_tiny_classifier())
    params = DetectParams()
    px, _ = face_pattern(128, 128, size=48)
    frame = Frame(px, 0)
    detect_ms, classify_ms = [], []
    for _ in range(args.frames):
        t0 = time.perf_counter()
        boxes = detect_multiscale(cascade, frame, params)
        t1 = time.perf_counter()
        box = largest_box(boxes)
        if box is not None:
            classify(classifier, preprocess_face(frame, box))
        t2 = time.perf_counter()
        detect_ms.append((t1 - t0) * 1000)
        classify_ms.append((t2 - t1) * 1000)

    def stats(name, xs):
        xs = sorted(xs)
        print(
            f"{name}: median {statistics.median(xs):.2f} ms, "
            f"p90 {xs[int(0.9 * (len(xs) - 1))]:.2f} ms, n={len(xs)}"
        )

    stats("detect (128x128, fixture cascade)", detect_ms)
    stats("classify (tiny model)", classify_ms)

    lexicon = load_lexicon((assets_dir() / "lexicon.txt").read_text(encoding="utf-8"))
    sel = pick_seed_word(lexicon, "happiness", (0, 0, 0, 0.9, 0, 0, 0.1), 7)
    t0 = time.perf_counter()
    generate_poem("template", None, sel, SamplingParams(rng_seed=7))
    print(f"template poem: {(time.perf_counter() - t0) * 1000:.2f} ms")
    lm = load_lm(build_tiny_lm())
    tok = tiny_tokenizer()
    t0 = time.perf_counter()
    generate_poem(lm, tok, sel, SamplingParams(rng_seed=7, max_tokens=40))
    print(f"tiny transformer poem (40 tokens): {(time.perf_counter() - t0) * 1000:.2f} ms")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affectmirror")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="start the gateway service")
    p.add_argument("--config", help=f"config JSON path (default: ${ENV_CONFIG})")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("detect", help="detect faces in a PGM/PPM image")
    p.add_argument("--image", required=True)
    p.add_argument("--cascade", required=True)
    p.add_argument("--min-neighbors", type=int, default=3)
    p.add_argument("--min-size", type=int, default=48)
    p.set_defaults(fn=_cmd_detect)

    p = sub.add_parser("classify", help="classify a face image into 7 emotions")
    p.add_argument("--image", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("generate", help="generate one poem")
    p.add_argument("--emotion", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lexicon")
    p.add_argument("--model", help="MRW1 language model (default: template backend)")
    p.add_argument("--vocab")
    p.add_argument("--merges")
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("simulate", help="replay an event script through the engine")
    p.add_argument("--script", required=True)
    p.add_argument("--nonce", type=int, default=0)
    p.add_argument("--lexicon")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("bench", help="per-stage latency on synthetic input")
    p.add_argument("--frames", type=int, default=30)
    p.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "generate" and bool(args.model) and not (args.vocab and args.merges):
        print("generate: --model needs --vocab and --merges", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (MirrorError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
