"""Reconstruction configuration and its ``key = value`` text format.

A config file is a list of ``dotted.key = value`` lines. ``#`` starts a
comment, and a ``[section]`` line prefixes the keys that follow it, so

    [loss]
    lambda_t = 10

is the same as ``loss.lambda_t = 10``. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError
from .inr import ENCODER_PRESETS, HashEncoderConfig, MlpConfig
from .losses import LossWeights


@dataclass(frozen=True)
class AdamSettings:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigurationError(f"adam.lr must be > 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ConfigurationError(f"adam.{name} must be in [0, 1), got {v}")
        if not self.eps > 0:
            raise ConfigurationError(f"adam.eps must be > 0, got {self.eps}")


@dataclass(frozen=True)
class ReconConfig:
    encoder_preset: str = "desk"
    encoder: HashEncoderConfig = field(default_factory=lambda: ENCODER_PRESETS["desk"])
    mlp: MlpConfig = field(default_factory=MlpConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    adam: AdamSettings = field(default_factory=AdamSettings)
    iterations: int = 3000
    seed: int = 0
    precision: str = "float32"
    of_frames: int = 0
    of_jitter: float = 0.0
    normalize: bool = True
    threads: int = 1
    log_every: int = 1
    output_dir: str = ""

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.of_frames < 0:
            raise ConfigurationError(f"of_frames must be >= 0, got {self.of_frames}")
        if not 0 <= self.of_jitter <= 1:
            raise ConfigurationError(f"of_jitter must be in [0, 1], got {self.of_jitter}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        if self.log_every < 1:
            raise ConfigurationError(f"log_every must be >= 1, got {self.log_every}")
        if self.encoder_preset not in (*ENCODER_PRESETS, "custom"):
            raise ConfigurationError(f"unknown encoder preset {self.encoder_preset!r}")

    def with_loss(self, **kw) -> "ReconConfig":
        return replace(self, loss=replace(self.loss, **kw))

    def to_flat(self) -> dict[str, object]:
        """Every setting under its dotted key."""
        flat: dict[str, object] = {"encoder.preset": self.encoder_preset}
        for prefix, obj in (("encoder", self.encoder), ("mlp", self.mlp), ("loss", self.loss),
                            ("adam", self.adam)):
            for f in fields(obj):
                flat[f"{prefix}.{f.name}"] = getattr(obj, f.name)
        for name in _TOP_LEVEL:
            flat[name] = getattr(self, name)
        return flat

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_flat().items())

    def hash(self) -> str:
        """sha256 of the canonical text snapshot, excluding the output directory."""
        text = "".join(f"{k} = {_format(v)}\n" for k, v in self.to_flat().items() if k != "output_dir")
        return hashlib.sha256(text.encode()).hexdigest()

    def to_json(self) -> dict:
        return json.loads(json.dumps(self.to_flat()))


_TOP_LEVEL = ("iterations", "seed", "precision", "of_frames", "of_jitter", "normalize", "threads", "log_every", "output_dir")


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, raw: str, target_type):
    try:
        if target_type is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {target_type.__name__}") from None


def _field_types(cls) -> dict[str, type]:
    hints = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: hints.get(f.type if isinstance(f.type, str) else f.type.__name__, str) for f in fields(cls)}


_SECTIONS = {"encoder": HashEncoderConfig, "mlp": MlpConfig, "loss": LossWeights, "adam": AdamSettings}


def parse_text(text: str, base: ReconConfig | None = None, source: str = "<config>") -> ReconConfig:
    """Parse config text on top of ``base`` (defaults when omitted)."""
    pairs: list[tuple[str, str, int]] = []
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if section:
            key = f"{section}.{key}"
        pairs.append((key, value, lineno))
    return apply_overrides(base or ReconConfig(), {k: v for k, v, _ in pairs}, source)


def apply_overrides(cfg: ReconConfig, overrides: dict[str, object], source: str = "<overrides>") -> ReconConfig:
    """Return ``cfg`` with dotted-key overrides applied (values may be strings)."""
    updates: dict[str, dict[str, object]] = {s: {} for s in _SECTIONS}
    top: dict[str, object] = {}
    preset = None
    for key, raw in overrides.items():
        if key == "encoder.preset":
            preset = str(raw)
            continue
        if "." in key:
            sec, name = key.split(".", 1)
            if sec not in _SECTIONS:
                raise ConfigurationError(f"{source}: unknown key {key!r}")
            types = _field_types(_SECTIONS[sec])
            if name not in types:
                raise ConfigurationError(f"{source}: unknown key {key!r}")
            updates[sec][name] = _coerce(key, str(raw), types[name]) if isinstance(raw, str) else raw
        else:
            types = _field_types(ReconConfig)
            if key not in _TOP_LEVEL:
                raise ConfigurationError(f"{source}: unknown key {key!r}")
            top[key] = _coerce(key, str(raw), types[key]) if isinstance(raw, str) else raw
    encoder_preset = cfg.encoder_preset
    encoder = cfg.encoder
    if preset is not None:
        if preset == "custom":
            encoder_preset = "custom"
        elif preset in ENCODER_PRESETS:
            encoder_preset, encoder = preset, ENCODER_PRESETS[preset]
        else:
            raise ConfigurationError(f"{source}: unknown encoder preset {preset!r}")
    if updates["encoder"]:
        encoder = replace(encoder, **updates["encoder"])
        if encoder not in ENCODER_PRESETS.values():
            encoder_preset = "custom"
    try:
        return replace(cfg, encoder_preset=encoder_preset, encoder=encoder,
                       mlp=replace(cfg.mlp, **updates["mlp"]),
                       loss=replace(cfg.loss, **updates["loss"]),
                       adam=replace(cfg.adam, **updates["adam"]), **top)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{source}: {exc}") from None


def load_config(path: str | Path, base: ReconConfig | None = None) -> ReconConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_text(text, base, str(path))


def save_config(cfg: ReconConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.dumps())
