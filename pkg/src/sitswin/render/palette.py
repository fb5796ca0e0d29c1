from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Protocol, Tuple

import numpy as np
from PySide6.QtGui import QColor

from sitswin.errors import PaletteError

Color = Tuple[int, int, int]

IGNORE_COLOR: Color = (0, 0, 0)
IGNORE_ID = 255

# HSV saturation / value of generated class colours
_SATURATION = 210
_VALUE = 235


class ClassEntry(Protocol):
    id: int
    color: Color


def class_color(class_id: int, num_classes: int) -> Color:
    """Hue 360 * id / K: evenly spaced around the colour wheel."""
    hue = (360 * class_id // num_classes) % 360
    r, g, b, _ = QColor.fromHsv(hue, _SATURATION, _VALUE).getRgb()
    return (r, g, b)


def default_colors(num_classes: int) -> List[Color]:
    return [class_color(k, num_classes) for k in range(num_classes)]


class Palette:
    """Class id -> RGB bytes. The ignore id always maps to black."""

    def __init__(self, colors: Mapping[int, Color], ignore_id: int = IGNORE_ID) -> None:
        self.colors: Dict[int, Color] = {int(k): tuple(int(v) for v in c) for k, c in colors.items()}
        self.ignore_id = ignore_id
        for k, c in self.colors.items():
            if not 0 <= k < 256 or any(not 0 <= v <= 255 for v in c):
                raise PaletteError(f"Palette: invalid entry {k} -> {c}")

    @classmethod
    def default(cls, num_classes: int) -> "Palette":
        return cls(dict(enumerate(default_colors(num_classes))))

    @classmethod
    def from_classes(cls, classes: Iterable[ClassEntry]) -> "Palette":
        """Colours from a class table (classes.txt)."""
        return cls({c.id: c.color for c in classes})

    def color(self, class_id: int) -> Color:
        if class_id == self.ignore_id:
            return IGNORE_COLOR
        try:
            return self.colors[class_id]
        except KeyError:
            raise PaletteError(f"Palette.color: no colour for class id {class_id}") from None

    def lookup_table(self) -> Tuple[np.ndarray, np.ndarray]:
        """(256, 3) uint8 colours and a (256,) mask of the ids that have one."""
        table = np.zeros((256, 3), dtype=np.uint8)
        known = np.zeros(256, dtype=bool)
        for k, c in self.colors.items():
            table[k] = c
            known[k] = True
        table[self.ignore_id] = IGNORE_COLOR
        known[self.ignore_id] = True
        return table, known

    def __len__(self) -> int:
        return len(self.colors)
