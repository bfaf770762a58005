"""Per-epoch training records, serialized as CSV and JSON next to checkpoints."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class TrainHistory:
    rows: list[dict] = field(default_factory=list)

    def append(self, epoch: int, lr: float, train_loss: float, val_loss: float | None, seconds: float) -> None:
        self.rows.append(
            {"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_loss": val_loss, "seconds": seconds}
        )

    def core(self) -> list[tuple]:
        """Rows without the wall-time column; this is the determinism surface."""
        return [(r["epoch"], r["lr"], r["train_loss"], r["val_loss"]) for r in self.rows]

    def final_train_loss(self) -> float:
        return self.rows[-1]["train_loss"]

    def best_val(self) -> float:
        vals = [r["val_loss"] for r in self.rows if r["val_loss"] is not None and math.isfinite(r["val_loss"])]
        return min(vals) if vals else math.nan

    def write_csv(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "lr", "train_loss", "val_loss", "seconds"])
            for r in self.rows:
                w.writerow(
                    [
                        r["epoch"],
                        repr(r["lr"]),
                        repr(r["train_loss"]),
                        "" if r["val_loss"] is None else repr(r["val_loss"]),
                        f"{r['seconds']:.3f}",
                    ]
                )

    def write_json(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps({"rows": self.rows}, indent=1) + "\n")
