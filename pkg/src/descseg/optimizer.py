"""Adam and the training loop that minimizes the barrier loss.

The loop always sees the full image: the loss sums descriptors over the
whole domain, so it cannot be sub-patched or split into mini-batches.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import (
    BarrierParams,
    ConstraintSpec,
    EntryStatus,
    all_active_satisfied,
    bounds_from_target,
    constraint_table,
)
from .descriptors import DescriptorSet, LaplacianCache
from .errors import NumericalError
from .gradients import loss_grad
from .grid import LogitField, ProbMap, softmax


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    iters_per_epoch: int = 100
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    seed: int = 0
    smooth_abs: bool = False
    log_every: int = 50

    def __post_init__(self):
        if self.epochs < 1 or self.iters_per_epoch < 1 or self.log_every < 1:
            raise ValueError("counts must be positive")
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("lr and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


@dataclass
class AdamState:
    """Moment accumulators; one state per flat parameter vector."""

    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    @classmethod
    def init(cls, num_params, lr=5e-4, beta1=0.9, beta2=0.99, eps=1e-8):
        return cls(0, np.zeros(num_params), np.zeros(num_params), lr, beta1, beta2, eps)


def adam_step(
    params: np.ndarray, grad: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    if params.shape != grad.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient passed to adam_step")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(step, m, v, state.lr, state.beta1, state.beta2, state.eps)
    return new_params, new_state


@dataclass
class TrainingReport:
    """Everything a run produced: loss trace, logs, final prediction."""

    records: list[dict]
    loss_trace: list[float]
    final_probs: ProbMap
    final_entries: list[EntryStatus]
    satisfied: bool
    wall_clock_s: float
    aborted: str | None = None

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")


def as_constraint_spec(
    spec_or_targets, slack: float = 0.10, barrier: BarrierParams | None = None
) -> ConstraintSpec:
    """Accept a ready ConstraintSpec or derive one from descriptor targets."""
    if isinstance(spec_or_targets, ConstraintSpec):
        return spec_or_targets
    if isinstance(spec_or_targets, DescriptorSet):
        return ConstraintSpec(
            bounds_from_target(spec_or_targets, slack),
            barrier=barrier or BarrierParams(),
        )
    raise TypeError(f"expected ConstraintSpec or DescriptorSet, got {type(spec_or_targets)}")


def train(
    predictor,
    spec_or_targets,
    lap: LaplacianCache,
    config: TrainConfig = TrainConfig(),
) -> TrainingReport:
    """Minimize the barrier loss over the predictor's parameters.

    Seeded and deterministic: equal seeds and configs give identical loss
    traces. If the loss turns non-finite the run aborts, keeping the last
    parameters that evaluated cleanly and recording which constraint blew up.
    """
    spec = as_constraint_spec(spec_or_targets)
    rng = np.random.default_rng(config.seed)
    params = predictor.init_params(rng)
    state = AdamState.init(
        params.size, config.lr, config.beta1, config.beta2, config.eps
    )
    shape = predictor.shape

    records: list[dict] = []
    losses: list[float] = []
    aborted = None
    last_good = params
    started = time.perf_counter()

    def log_record(epoch, iteration, t, loss, logits):
        table = constraint_table(softmax(logits), spec, lap)
        records.append(
            {
                "epoch": epoch,
                "iteration": iteration,
                "t": t,
                "loss": loss,
                "entries": [row.to_dict() for row in table],
            }
        )

    iteration = 0
    for epoch in range(config.epochs):
        t = spec.barrier.value_at(epoch)
        for _ in range(config.iters_per_epoch):
            raw, cache = predictor.forward(params)
            logits = LogitField(shape, raw)
            try:
                loss, gfield = loss_grad(
                    logits, spec, lap, t, smooth_abs=config.smooth_abs
                )
            except NumericalError as exc:
                aborted = str(exc)
                break
            last_good = params
            losses.append(loss)
            if iteration % config.log_every == 0:
                log_record(epoch, iteration, t, loss, logits)
            grad = predictor.backward(params, cache, gfield.values)
            try:
                params, state = adam_step(params, grad, state)
            except NumericalError as exc:
                aborted = f"epoch {epoch}: {exc}"
                break
            iteration += 1
        if aborted is not None:
            break

    final_params = last_good if aborted is not None else params
    final_probs = softmax(LogitField(shape, predictor.logits(final_params)))
    final_entries = constraint_table(final_probs, spec, lap)
    satisfied = aborted is None and all_active_satisfied(final_entries)
    return TrainingReport(
        records=records,
        loss_trace=losses,
        final_probs=final_probs,
        final_entries=final_entries,
        satisfied=satisfied,
        wall_clock_s=time.perf_counter() - started,
        aborted=aborted,
    )
