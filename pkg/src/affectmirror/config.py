"""Gateway configuration: one JSON file describing the whole appliance.

Paths may use the "${assets}" prefix to reference files bundled with the
package, so the default config runs out of the box. The MIRROR_CONFIG
environment variable supplies the default config path for the CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .engine import EngineConfig
from .detect import DetectParams
from .errors import ConfigError
from .frames import SourceSpec
from .poems import DEFAULT_PROMPT_TEMPLATE, SamplingParams

ENV_CONFIG = "MIRROR_CONFIG"


def assets_dir() -> Path:
    return Path(resources.files("affectmirror") / "assets")


def expand_path(value: str) -> Path:
    if value.startswith("${assets}"):
        return assets_dir() / value[len("${assets}") :].lstrip("/")
    return Path(value)


@dataclass
class GatewayConfig:
    source: SourceSpec
    cascade_path: Path
    classifier_path: Path
    lexicon_path: Path
    lm_path: Path | None = None  # None = template backend
    vocab_path: Path | None = None
    merges_path: Path | None = None
    engine: EngineConfig = field(default_factory=EngineConfig)
    detect: DetectParams = field(default_factory=DetectParams)
    host: str = "127.0.0.1"
    port: int = 8765
    log_dir: Path = Path("./mirror-data/logs")
    archive_dir: Path = Path("./mirror-data/archive")
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    tick_ms: int = 250

    def validate_files(self) -> None:
        required = [("cascade", self.cascade_path), ("classifier", self.classifier_path),
                    ("lexicon", self.lexicon_path)]
        if self.lm_path is not None:
            required.append(("language model", self.lm_path))
            if self.vocab_path is None or self.merges_path is None:
                raise ConfigError("transformer backend needs vocab_path and merges_path")
            required += [("vocabulary", self.vocab_path), ("merges", self.merges_path)]
        for what, path in required:
            if not Path(path).is_file():
                raise ConfigError(f"{what} file not found: {path}")


def _engine_config(d: dict) -> EngineConfig:
    sampling = d.pop("sampling", {})
    try:
        return EngineConfig(sampling=SamplingParams(**sampling), **d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad engine config: {e}") from None


def load_config(path: str | Path) -> GatewayConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> GatewayConfig:
    try:
        src = raw.get("source", {})
        source = SourceSpec(
            kind=src.get("kind", "synthetic"),
            locator=src.get("locator", "uniform"),
            fps_cap=float(src.get("fps_cap", 15)),
        )
        lm = raw.get("lm", "template")
        lm_path = None if lm in (None, "template") else expand_path(lm)
        detect = DetectParams(**raw["detect"]) if "detect" in raw else DetectParams()
        cfg = GatewayConfig(
            source=source,
            cascade_path=expand_path(raw["cascade_path"]),
            classifier_path=expand_path(raw["classifier_path"]),
            lexicon_path=expand_path(raw["lexicon_path"]),
            lm_path=lm_path,
            vocab_path=expand_path(raw["vocab_path"]) if raw.get("vocab_path") else None,
            merges_path=expand_path(raw["merges_path"]) if raw.get("merges_path") else None,
            engine=_engine_config(dict(raw.get("engine", {}))),
            detect=detect,
            host=raw.get("host", "127.0.0.1"),
            port=int(raw.get("port", 8765)),
            log_dir=Path(raw.get("log_dir", "./mirror-data/logs")),
            archive_dir=Path(raw.get("archive_dir", "./mirror-data/archive")),
            prompt_template=raw.get("prompt_template", DEFAULT_PROMPT_TEMPLATE),
            tick_ms=int(raw.get("tick_ms", 250)),
        )
    except KeyError as e:
        raise ConfigError(f"config missing required key {e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad config value: {e}") from None
    if cfg.tick_ms <= 0:
        raise ConfigError("tick_ms must be > 0")
    cfg.validate_files()
    return cfg
