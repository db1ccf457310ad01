"""Tracked anatomical landmarks: 3D points tagged by wall and level."""

from dataclasses import dataclass, field

import numpy as np

WALLS = ("anterior", "lateral", "posterior", "septal")
LEVELS = ("basal", "midventricular", "apical")


@dataclass
class LandmarkSet:
    points: np.ndarray           # (n, 3) physical positions, mm or domain units
    walls: list
    levels: list
    frame: int = 0
    observer: str = "obs1"
    volunteer: str = "v1"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("landmark points must be (n, 3)")
        n = len(self.points)
        if len(self.walls) != n or len(self.levels) != n:
            raise ValueError("one wall and level tag per point required")
        for w in self.walls:
            if w not in WALLS:
                raise ValueError(f"unknown wall {w!r}")
        for lv in self.levels:
            if lv not in LEVELS:
                raise ValueError(f"unknown level {lv!r}")
        seen = set()
        for w, lv in zip(self.walls, self.levels):
            if (w, lv) in seen:
                raise ValueError(f"duplicate landmark ({w}, {lv}) in frame {self.frame}")
            seen.add((w, lv))

    def __len__(self):
        return len(self.points)

    def with_points(self, points, frame=None) -> "LandmarkSet":
        return LandmarkSet(points=points, walls=list(self.walls),
                           levels=list(self.levels),
                           frame=self.frame if frame is None else frame,
                           observer=self.observer, volunteer=self.volunteer)
