"""On-disk cache of per-point order-parameter results, one JSON file per cell."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class CellStore:
    """Cells live under ``root/<scenario fingerprint>/``; a file exists only once complete."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def _path(self, fingerprint: str, rate: int, phi: float, mean_capacity: float) -> Path:
        return self.root / fingerprint / f"R{int(rate)}_phi{float(phi):.9g}_C{float(mean_capacity):.9g}.json"

    def get(self, fingerprint: str, rate: int, phi: float, mean_capacity: float) -> dict | None:
        path = self._path(fingerprint, rate, phi, mean_capacity)
        try:
            return json.loads(path.read_text())
        except FileNotFoundError:
            return None

    def put(self, fingerprint: str, rate: int, phi: float, mean_capacity: float, cell: dict) -> None:
        write_atomic(self._path(fingerprint, rate, phi, mean_capacity), json.dumps(cell, sort_keys=True))

    def count(self) -> int:
        return sum(1 for _ in self.root.glob("*/*.json"))
