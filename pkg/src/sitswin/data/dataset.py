"""
Dataset directories: `.sit` tiles plus two text files.

splits.txt   `<filename> <split>` per line (train, val, test or any other
             split name such as test_a)
classes.txt  `<id> <name> <r> <g> <b>` per line; the name may contain spaces

`#` starts a comment line in both files.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from sitswin.data.tile import SitsTile, load_tile, temporal_resample
from sitswin.errors import ConfigError, FormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Color = Tuple[int, int, int]

SPLITS_FILE = "splits.txt"
CLASSES_FILE = "classes.txt"
STANDARD_SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ClassInfo:
    id: int
    name: str
    color: Color


def _content_lines(path: Path) -> Iterable[Tuple[int, List[str]]]:
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield number, stripped.split()


def read_splits(path: PathLike) -> List[Tuple[str, str]]:
    path = Path(path)
    entries: List[Tuple[str, str]] = []
    seen: Dict[str, int] = {}
    for number, tokens in _content_lines(path):
        if len(tokens) != 2:
            raise FormatError(f"{path}:{number}: expected '<filename> <split>', got {' '.join(tokens)!r}")
        name, split = tokens
        if name in seen:
            raise FormatError(f"{path}:{number}: {name} already assigned on line {seen[name]}; splits must be disjoint")
        seen[name] = number
        entries.append((name, split))
    return entries


def read_classes(path: PathLike) -> List[ClassInfo]:
    path = Path(path)
    classes: List[ClassInfo] = []
    for number, tokens in _content_lines(path):
        if len(tokens) < 5:
            raise FormatError(f"{path}:{number}: expected '<id> <name> <r> <g> <b>', got {' '.join(tokens)!r}")
        try:
            class_id = int(tokens[0])
            color = tuple(int(v) for v in tokens[-3:])
        except ValueError:
            raise FormatError(f"{path}:{number}: id and colour must be integers") from None
        if any(not 0 <= v <= 255 for v in color):
            raise FormatError(f"{path}:{number}: colour {color} outside 0..255")
        if class_id != len(classes):
            raise FormatError(f"{path}:{number}: class ids must run 0, 1, 2, ...; expected {len(classes)}, got {class_id}")
        classes.append(ClassInfo(class_id, " ".join(tokens[1:-3]), color))
    if not classes:
        raise FormatError(f"{path}: no classes defined")
    return classes


def write_splits(path: PathLike, entries: Sequence[Tuple[str, str]]) -> None:
    Path(path).write_text("".join(f"{name} {split}\n" for name, split in entries), encoding="utf-8")


def write_classes(path: PathLike, classes: Sequence[ClassInfo]) -> None:
    lines = (f"{c.id} {c.name} {c.color[0]} {c.color[1]} {c.color[2]}\n" for c in classes)
    Path(path).write_text("".join(lines), encoding="utf-8")


@dataclass
class DatasetIndex:
    """Tile files with their split and the class table of one dataset directory."""

    root: Path
    entries: List[Tuple[str, str]]
    classes: List[ClassInfo] = field(default_factory=list)

    @classmethod
    def load(cls, root: PathLike, check_tiles: bool = False) -> "DatasetIndex":
        """Read splits.txt and classes.txt; every listed tile must exist (and parse, with check_tiles)."""
        root = Path(root)
        if not root.is_dir():
            raise ConfigError(f"DatasetIndex.load: data directory {root} does not exist", key="data_dir")
        for name in (SPLITS_FILE, CLASSES_FILE):
            if not (root / name).is_file():
                raise FormatError(f"DatasetIndex.load: {root / name} is missing")
        index = cls(root, read_splits(root / SPLITS_FILE), read_classes(root / CLASSES_FILE))
        for name, _ in index.entries:
            path = root / name
            if not path.is_file():
                raise FormatError(f"DatasetIndex.load: {path} listed in {SPLITS_FILE} does not exist")
            if check_tiles:
                tile = load_tile(path)
                if tile.num_classes != index.num_classes:
                    raise FormatError(f"DatasetIndex.load: {path} declares {tile.num_classes} classes, {CLASSES_FILE} has {index.num_classes}")
        logger.info("dataset %s: %d tiles, %d classes, splits %s", root, len(index.entries), index.num_classes, index.counts())
        return index

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        write_splits(self.root / SPLITS_FILE, self.entries)
        write_classes(self.root / CLASSES_FILE, self.classes)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def split_names(self) -> List[str]:
        names = {split for _, split in self.entries}
        return [s for s in STANDARD_SPLITS if s in names] + sorted(names - set(STANDARD_SPLITS))

    def files(self, split: str) -> List[Path]:
        return [self.root / name for name, s in self.entries if s == split]

    def has_split(self, split: str) -> bool:
        return any(s == split for _, s in self.entries)

    def counts(self) -> Dict[str, int]:
        return {split: len(self.files(split)) for split in self.split_names}


class Dataset:
    """
    Tiles of a DatasetIndex, loaded on first use and resampled to the
    model's time length. Loading is read-only and safe from several threads.
    """

    def __init__(self, index: DatasetIndex, time_steps: Optional[int] = None) -> None:
        self.index = index
        self.time_steps = time_steps
        self._cache: Dict[Path, SitsTile] = {}
        self._lock = threading.Lock()

    @classmethod
    def open(cls, root: PathLike, time_steps: Optional[int] = None) -> "Dataset":
        return cls(DatasetIndex.load(root), time_steps)

    def tile(self, path: Path) -> SitsTile:
        with self._lock:
            cached = self._cache.get(path)
        if cached is not None:
            return cached
        tile = load_tile(path)
        if self.time_steps is not None:
            tile = temporal_resample(tile, self.time_steps)
        with self._lock:
            self._cache.setdefault(path, tile)
        return tile

    def split(self, name: str) -> List[SitsTile]:
        if not self.index.has_split(name):
            raise ConfigError(f"Dataset.split: no tiles assigned to split '{name}' in {self.index.root}", key="split")
        return [self.tile(path) for path in self.index.files(name)]

    def has_split(self, name: str) -> bool:
        return self.index.has_split(name)
