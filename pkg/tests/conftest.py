import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from affectmirror.affect import load_lexicon
from affectmirror.classifier import load_classifier
from affectmirror.config import assets_dir
from affectmirror.detect import load_cascade
from affectmirror.fixtures import build_tiny_classifier, build_tiny_lm
from affectmirror.frames import Frame, face_pattern
from affectmirror.lm import load_lm


@pytest.fixture(scope="session")
def assets() -> Path:
    return assets_dir()


@pytest.fixture(scope="session")
def fixture_cascade(assets):
    return load_cascade((assets / "cascade_fixture.xml").read_bytes())


@pytest.fixture(scope="session")
def tiny_classifier():
    return load_classifier(build_tiny_classifier())


@pytest.fixture(scope="session")
def tiny_lm():
    return load_lm(build_tiny_lm())


@pytest.fixture(scope="session")
def lexicon(assets):
    return load_lexicon((assets / "lexicon.txt").read_text(encoding="utf-8"))


@pytest.fixture()
def face_frame():
    px, truth = face_pattern(128, 128, size=48)
    return Frame(px, 0), truth


def gpt2_assets_dir() -> Path | None:
    """Standard GPT-2 tokenizer assets are optional; point GPT2_ASSETS at a
    directory holding vocab.json/encoder.json and merges.txt/vocab.bpe."""
    root = os.environ.get("GPT2_ASSETS")
    if not root:
        return None
    root = Path(root)
    vocab = next((p for p in (root / "vocab.json", root / "encoder.json") if p.is_file()), None)
    merges = next((p for p in (root / "merges.txt", root / "vocab.bpe") if p.is_file()), None)
    return root if vocab and merges else None
