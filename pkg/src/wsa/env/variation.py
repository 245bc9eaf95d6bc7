from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

# black is drawn dark gray so recoloured entities stay visible on the 0 background
PALETTE = np.array([
    [0.15, 0.15, 0.15],
    [1.0, 1.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 0.0],
], dtype=np.float32)
PALETTE_NAMES = ("black", "white", "red", "blue", "green")


@dataclass(frozen=True)
class Variation:
    player_color: int | None = None
    block_color: int | None = None
    lazy_enemy: bool = False

    def __post_init__(self):
        for name in ("player_color", "block_color"):
            value = getattr(self, name)
            if value is not None and not (isinstance(value, (int, np.integer)) and 0 <= value <= 4):
                raise ConfigError(f"{name} must be a palette index in [0, 4], got {value!r}")

    @property
    def is_default(self):
        return self == Variation()

    def validate_for(self, game: str):
        if self.lazy_enemy and game != "minipong":
            raise ConfigError("lazy_enemy is only defined for minipong")
        if self.block_color is not None and game != "minibreakout":
            raise ConfigError("block_color is only defined for minibreakout")

    def to_string(self):
        parts = []
        if self.player_color is not None:
            parts.append(f"cp={self.player_color}")
        if self.block_color is not None:
            parts.append(f"cb={self.block_color}")
        if self.lazy_enemy:
            parts.append("lazy=true")
        return ",".join(parts)

    def to_dict(self):
        return {"player_color": self.player_color, "block_color": self.block_color,
                "lazy_enemy": self.lazy_enemy}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("player_color"), d.get("block_color"), bool(d.get("lazy_enemy", False)))

    @classmethod
    def parse(cls, text: str | None) -> "Variation":
        """Parse ``cp=<0-4>,cb=<0-4>,lazy=<bool>``; empty text means no variation."""
        if not text or text.strip().lower() in ("", "none", "default"):
            return cls()
        kwargs = {}
        for item in text.split(","):
            if "=" not in item:
                raise ConfigError(f"bad variation item {item!r}")
            key, value = (s.strip().lower() for s in item.split("=", 1))
            if key in ("cp", "cb"):
                if value in ("none", ""):
                    continue
                try:
                    index = int(value)
                except ValueError:
                    raise ConfigError(f"bad palette index {value!r}") from None
                kwargs["player_color" if key == "cp" else "block_color"] = index
            elif key == "lazy":
                if value not in ("true", "false", "1", "0"):
                    raise ConfigError(f"lazy must be true or false, got {value!r}")
                kwargs["lazy_enemy"] = value in ("true", "1")
            else:
                raise ConfigError(f"unknown variation key {key!r}")
        return cls(**kwargs)


def recolor_grid():
    """All 25 player/block recolour cells, player-major."""
    return [Variation(player_color=cp, block_color=cb) for cp in range(5) for cb in range(5)]
