"""Dice overlap metrics and constraint-satisfaction reporting."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSpec, EntryStatus, all_active_satisfied, constraint_table
from .descriptors import LaplacianCache
from .grid import LabelMask, ProbMap, argmax_labels


def dice(pred: LabelMask, gt: LabelMask, k: int) -> float:
    """Dice coefficient 2|P & G| / (|P| + |G|) for class k.

    Both regions empty counts as a perfect 1.0 (correct absence); one empty
    region against a non-empty one scores 0.0.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p = pred.labels == k
    g = gt.labels == k
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / total


@dataclass
class EvalReport:
    """Per-class Dice plus the constraint slack table for one prediction."""

    dice_per_class: tuple[float, ...]
    mean_foreground_dice: float
    entries: list[EntryStatus]
    satisfied: bool
    runtime_s: float

    def to_dict(self) -> dict:
        return {
            "dice_per_class": list(self.dice_per_class),
            "mean_foreground_dice": self.mean_foreground_dice,
            "entries": [row.to_dict() for row in self.entries],
            "satisfied": self.satisfied,
            "runtime_s": self.runtime_s,
        }


def report(
    probs: ProbMap, gt: LabelMask, spec: ConstraintSpec, lap: LaplacianCache
) -> EvalReport:
    """Argmax the prediction, score Dice per class, evaluate every constraint.

    Foreground means every class except 0; the mean foreground Dice is the
    headline number.
    """
    started = time.perf_counter()
    if probs.num_classes != gt.num_classes:
        raise ValueError(
            f"class count mismatch: {probs.num_classes} vs {gt.num_classes}"
        )
    pred = argmax_labels(probs)
    dices = tuple(dice(pred, gt, k) for k in range(gt.num_classes))
    entries = constraint_table(probs, spec, lap)
    return EvalReport(
        dice_per_class=dices,
        mean_foreground_dice=float(np.mean(dices[1:])),
        entries=entries,
        satisfied=all_active_satisfied(entries),
        runtime_s=time.perf_counter() - started,
    )
