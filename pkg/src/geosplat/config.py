"""Tool settings with flags > environment > TOML file precedence.

Environment variables use the GEOSPLAT_ prefix (GEOSPLAT_CACHE_DIR,
GEOSPLAT_PROVIDER_FILE, GEOSPLAT_PROVIDER); a config file can be named via
--config or GEOSPLAT_CONFIG.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

_ENV_PREFIX = "GEOSPLAT_"


@dataclass
class Settings:
    cache_dir: str = "~/.cache/geosplat/tiles"
    provider_file: str | None = None
    provider: str | None = None
    ppm: float = 2.0
    size: int = 512

    def expanded_cache_dir(self) -> Path:
        return Path(os.path.expanduser(self.cache_dir))


def _load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(Path(path).read_text())


def load_settings(config_path=None, flags: dict | None = None) -> Settings:
    """Resolve settings: defaults, then TOML file, then env, then flags."""
    settings = Settings()
    path = config_path or os.environ.get(_ENV_PREFIX + "CONFIG")
    if path:
        data = _load_toml(path)
        for f in fields(Settings):
            if f.name in data:
                setattr(settings, f.name, data[f.name])
    for f in fields(Settings):
        env = os.environ.get(_ENV_PREFIX + f.name.upper())
        if env is not None:
            setattr(settings, f.name, type_coerce(f.type, env))
    for key, value in (flags or {}).items():
        if value is not None:
            setattr(settings, key, value)
    return settings


def type_coerce(annotation, raw: str):
    if "int" in str(annotation):
        return int(raw)
    if "float" in str(annotation):
        return float(raw)
    return raw
