"""Static 2D arenas: walls, circular obstacles, raycasting and collision queries."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

MAP_FORMAT = 1
SPAWN_ATTEMPTS = 10_000


class MapError(ValueError):
    """Raised when a map document fails validation."""


@dataclass(frozen=True)
class WorldMap:
    width: float
    height: float
    walls: tuple[tuple[float, float, float, float], ...]
    obstacles: tuple[tuple[float, float, float], ...] = ()
    name: str = "unnamed"
    # cached numpy views; excluded from equality
    _seg: np.ndarray = field(default=None, repr=False, compare=False)  # type: ignore[assignment]
    _circ: np.ndarray = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.width > 0:
            raise MapError("width must be positive")
        if not self.height > 0:
            raise MapError("height must be positive")
        for i, (cx, cy, r) in enumerate(self.obstacles):
            if not r > 0:
                raise MapError(f"obstacles[{i}].r must be positive")
            if not (0 <= cx <= self.width and 0 <= cy <= self.height):
                raise MapError(f"obstacles[{i}] center ({cx}, {cy}) lies outside the arena")
        walls = _with_boundary(tuple(tuple(map(float, w)) for w in self.walls), self.width, self.height)
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "obstacles", tuple(tuple(map(float, o)) for o in self.obstacles))
        object.__setattr__(self, "_seg", np.array(walls, dtype=np.float64).reshape(-1, 4))
        object.__setattr__(self, "_circ", np.array(self.obstacles, dtype=np.float64).reshape(-1, 3))

    def to_dict(self) -> dict:
        return {
            "format": MAP_FORMAT,
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "obstacles": [{"cx": cx, "cy": cy, "r": r} for cx, cy, r in self.obstacles],
            "walls": [{"x1": a, "y1": b, "x2": c, "y2": d} for a, b, c, d in self.walls],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _boundary(width, height):
    w, h = float(width), float(height)
    return ((0.0, 0.0, w, 0.0), (w, 0.0, w, h), (w, h, 0.0, h), (0.0, h, 0.0, 0.0))


def _with_boundary(walls, width, height):
    present = set()
    for x1, y1, x2, y2 in walls:
        present.add((x1, y1, x2, y2))
        present.add((x2, y2, x1, y1))
    missing = tuple(b for b in _boundary(width, height) if b not in present)
    return missing + walls if missing else walls


def _number(doc, key, where):
    if key not in doc:
        raise MapError(f"{where}: missing field '{key}'")
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise MapError(f"{where}: field '{key}' must be a finite number")
    return float(val)


def map_from_dict(doc: dict) -> WorldMap:
    if not isinstance(doc, dict):
        raise MapError("map document must be an object")
    fmt = doc.get("format", MAP_FORMAT)
    if fmt != MAP_FORMAT:
        raise MapError(f"unsupported map format {fmt!r}")
    width = _number(doc, "width", "map")
    height = _number(doc, "height", "map")
    if width <= 0:
        raise MapError("width must be positive")
    if height <= 0:
        raise MapError("height must be positive")
    obstacles = []
    for i, o in enumerate(doc.get("obstacles", [])):
        where = f"obstacles[{i}]"
        if not isinstance(o, dict):
            raise MapError(f"{where} must be an object")
        obstacles.append((_number(o, "cx", where), _number(o, "cy", where), _number(o, "r", where)))
    walls = []
    for i, w in enumerate(doc.get("walls", [])):
        where = f"walls[{i}]"
        if not isinstance(w, dict):
            raise MapError(f"{where} must be an object")
        walls.append(tuple(_number(w, k, where) for k in ("x1", "y1", "x2", "y2")))
    name = doc.get("name", "unnamed")
    if not isinstance(name, str):
        raise MapError("name must be a string")
    return WorldMap(width, height, tuple(walls), tuple(obstacles), name)


def loads_map(text: str) -> WorldMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapError(f"map is not valid JSON: {exc}") from exc
    return map_from_dict(doc)


def load_map(source) -> WorldMap:
    """Load a map from a path, a JSON string or an already-parsed dict.

    Bare names such as ``"env1"`` resolve to the maps bundled with the package.
    """
    if isinstance(source, dict):
        return map_from_dict(source)
    if isinstance(source, WorldMap):
        return source
    text = str(source)
    if text.lstrip().startswith("{"):
        return loads_map(text)
    path = Path(text)
    if not path.exists():
        bundled = resources.files("agvrl") / "maps" / f"{path.stem}.json"
        if path.suffix in ("", ".json") and bundled.is_file():
            return loads_map(bundled.read_text())
        raise MapError(f"map file not found: {text}")
    return loads_map(path.read_text())


def bundled_map_names() -> list[str]:
    root = resources.files("agvrl") / "maps"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


@dataclass(frozen=True)
class RangeScan:
    beam_angles: np.ndarray
    ranges: np.ndarray


def uniform_beams(n: int) -> np.ndarray:
    """``n`` ascending beam angles evenly spread over ``[-pi, pi)``."""
    return -np.pi + 2.0 * np.pi * np.arange(n) / n


def raycast(world: WorldMap, pose, beam_angles, max_range: float) -> RangeScan:
    """Exact distance to the first wall or obstacle along each beam, clipped to ``max_range``."""
    x, y, psi = float(pose[0]), float(pose[1]), float(pose[2])
    angles = np.asarray(beam_angles, dtype=np.float64)
    theta = psi + angles
    dx = np.cos(theta)[:, None]
    dy = np.sin(theta)[:, None]
    best = np.full(angles.shape, float(max_range))

    seg = world._seg
    if len(seg):
        ax, ay = seg[:, 0], seg[:, 1]
        ex, ey = seg[:, 2] - ax, seg[:, 3] - ay
        denom = dx * ey - dy * ex  # cross(d, e)
        wx, wy = ax - x, ay - y
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = (wx * ey - wy * ex) / denom
            s = (wx * dy - wy * dx) / denom
        ok = (np.abs(denom) > 1e-15) & (t > 0) & (s >= 0) & (s <= 1)
        t = np.where(ok, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    circ = world._circ
    if len(circ):
        ox, oy = x - circ[:, 0], y - circ[:, 1]
        b = dx * ox + dy * oy
        c = ox * ox + oy * oy - circ[:, 2] ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t1 = -b - root
        t2 = -b + root
        t = np.where(t1 > 0, t1, t2)
        t = np.where((disc >= 0) & (t > 0), t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    return RangeScan(angles, best)


def clearance(world: WorldMap, x: float, y: float) -> float:
    """Distance from a point to the nearest wall segment or obstacle surface."""
    d = np.inf
    seg = world._seg
    if len(seg):
        ax, ay = seg[:, 0], seg[:, 1]
        ex, ey = seg[:, 2] - ax, seg[:, 3] - ay
        ll = ex * ex + ey * ey
        u = np.clip(((x - ax) * ex + (y - ay) * ey) / np.where(ll > 0, ll, 1.0), 0.0, 1.0)
        d = min(d, float(np.min(np.hypot(ax + u * ex - x, ay + u * ey - y))))
    circ = world._circ
    if len(circ):
        d = min(d, float(np.min(np.hypot(circ[:, 0] - x, circ[:, 1] - y) - circ[:, 2])))
    return d


def collision_check(world: WorldMap, pose, footprint_radius: float) -> bool:
    """True if a disc of ``footprint_radius`` at the pose touches any geometry or leaves the arena."""
    x, y = float(pose[0]), float(pose[1])
    r = float(footprint_radius)
    if x - r < 0 or y - r < 0 or x + r > world.width or y + r > world.height:
        return True
    return clearance(world, x, y) <= r


def sample_spawn(world: WorldMap, rng: np.random.Generator, clearance: float = 1.0):
    """Rejection-sample a collision-free pose ``(x, y, psi)``."""
    for _ in range(SPAWN_ATTEMPTS):
        x = rng.uniform(0.0, world.width)
        y = rng.uniform(0.0, world.height)
        psi = rng.uniform(-np.pi, np.pi)
        if not collision_check(world, (x, y, psi), clearance):
            return (float(x), float(y), float(psi))
    raise MapError(f"map too crowded for clearance {clearance} m")
