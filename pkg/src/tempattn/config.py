"""Flat ``key = value`` run configuration with flag overrides."""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Mapping

from .seq2seq import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


# keys that are not fields of ModelConfig / TrainConfig
DATA_KEYS = {
    "train_src", "train_tgt", "dev_src", "dev_tgt", "src_vocab", "tgt_vocab", "out_dir",
    "src_vocab_size", "tgt_vocab_size", "min_count", "lexicon", "candidate_k",
    "candidate_frequent", "candidate_cap", "beam", "len_norm", "max_len",
}
MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"src_vocab", "tgt_vocab"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
KNOWN_KEYS = DATA_KEYS | MODEL_KEYS | TRAIN_KEYS

DEFAULTS = {
    "src_vocab_size": "30000", "tgt_vocab_size": "30000", "min_count": "1",
    "candidate_k": "10", "candidate_frequent": "2000", "beam": "10", "len_norm": "on",
}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{origin}:{n}: expected 'key = value'")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{origin}:{n}: unknown config key '{key}'")
        out[key] = value
    return out


class RunConfig:
    """Config-file values overlaid with command-line overrides."""

    def __init__(self, values: Mapping[str, str] | None = None):
        for k in values or {}:
            if k not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key '{k}'")
        self.values = dict(DEFAULTS)
        self.values.update(values or {})

    @classmethod
    def load(cls, path=None, overrides: Mapping[str, object] | None = None) -> "RunConfig":
        values = {}
        if path is not None:
            p = Path(path)
            try:
                text = p.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
            values = parse_config_text(text, str(p))
        for k, v in (overrides or {}).items():
            if v is not None:
                values[k] = str(v)
        return cls(values)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"missing required config key '{key}'")
        return self.values[key]

    def int(self, key: str, default=None):
        v = self.values.get(key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"config key '{key}': expected an integer, got {v!r}") from None

    def flag(self, key: str, default: bool = False) -> bool:
        v = self.values.get(key)
        if v is None:
            return default
        if v.lower() in ("on", "true", "yes", "1"):
            return True
        if v.lower() in ("off", "false", "no", "0"):
            return False
        raise ConfigError(f"config key '{key}': expected on/off, got {v!r}")

    def _typed(self, cls, keys, extra=None):
        kw = dict(extra or {})
        for f in fields(cls):
            if f.name in keys and f.name in self.values:
                raw = self.values[f.name]
                typ = f.type if isinstance(f.type, str) else f.type.__name__
                try:
                    if typ == "bool":
                        kw[f.name] = self.flag(f.name)
                    elif typ == "int":
                        kw[f.name] = int(raw)
                    elif typ == "float":
                        kw[f.name] = float(raw)
                    else:
                        kw[f.name] = raw
                except ValueError:
                    raise ConfigError(f"config key '{f.name}': bad value {raw!r}") from None
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def model_config(self, src_vocab: int, tgt_vocab: int) -> ModelConfig:
        hw = self.values.get("history_window")
        if hw is not None and hw.lower() in ("inf", "unlimited"):
            self.values["history_window"] = "0"
        return self._typed(ModelConfig, MODEL_KEYS, {"src_vocab": src_vocab, "tgt_vocab": tgt_vocab})

    def train_config(self) -> TrainConfig:
        return self._typed(TrainConfig, TRAIN_KEYS)

    def echo(self) -> dict[str, str]:
        return dict(sorted(self.values.items()))
