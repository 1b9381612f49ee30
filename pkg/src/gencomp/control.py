"""User control: trajectory keypoints plus a scale factor.

JSON wire format:
    {"mode": "drag" | "click", "scale": 1.0,
     "points": [{"frame": 0, "x": 12.0, "y": 8.0}, ...]}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InvalidInputError

MODES = ("drag", "click")
MAX_SCALE = 8.0


@dataclass
class ControlSpec:
    mode: str
    points: list[tuple[int, float, float]]  # (frame_index, x, y)
    scale: float = 1.0

    def validate(self, bounds: tuple[int, int, int] | None = None) -> "ControlSpec":
        """Check invariants; `bounds` is the background (F, H, W) when known."""
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.points:
            raise InvalidInputError("points must be non-empty")
        if not (0.0 < self.scale <= MAX_SCALE):
            raise InvalidInputError(f"scale must be in (0, {MAX_SCALE}], got {self.scale}")
        frames = [p[0] for p in self.points]
        if any(f < 0 for f in frames):
            raise InvalidInputError("frame indices must be >= 0")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise InvalidInputError("frame indices must be strictly increasing")
        if bounds is not None:
            nf, h, w = bounds
            for f, x, y in self.points:
                if f >= nf:
                    raise InvalidInputError(f"point frame {f} >= video frame count {nf}")
                if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
                    raise InvalidInputError(f"point ({x},{y}) outside frame bounds {w}x{h}")
        return self

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "scale": self.scale,
                "points": [{"frame": f, "x": x, "y": y} for f, x, y in self.points],
            }
        )

    @classmethod
    def from_json(cls, text: str | bytes | dict) -> "ControlSpec":
        try:
            obj = json.loads(text) if not isinstance(text, dict) else text
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"control spec: invalid JSON: {e}") from e
        if not isinstance(obj, dict):
            raise InvalidInputError("control spec: expected a JSON object")
        for key in ("mode", "points"):
            if key not in obj:
                raise InvalidInputError(f"control spec: missing field {key!r}")
        pts = obj["points"]
        if not isinstance(pts, list):
            raise InvalidInputError("control spec: points must be a list")
        points = []
        for i, p in enumerate(pts):
            try:
                points.append((int(p["frame"]), float(p["x"]), float(p["y"])))
            except (KeyError, TypeError, ValueError) as e:
                raise InvalidInputError(f"control spec: bad point at index {i}: {e}") from e
        try:
            scale = float(obj.get("scale", 1.0))
        except (TypeError, ValueError) as e:
            raise InvalidInputError(f"control spec: bad scale: {e}") from e
        return cls(mode=str(obj["mode"]), points=points, scale=scale).validate()
