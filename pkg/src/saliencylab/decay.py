"""Gradual bias decay with distillation against the original network.

The student starts as a copy of the teacher. At each rescale step the
bias-role parameters (conv/dense biases, batchnorm beta and mean) are set to
schedule_scale x their original values, then the non-bias weights are
fine-tuned for a fixed number of steps on the temperature-softened
cross-entropy against the teacher's logits. Batchnorm gamma and var stay
constant throughout. The schedule ends at exactly zero, optionally followed
by extra fine-tuning with biases pinned at zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import functional as F
from . import nets
from .training import make_optimizer

Array = np.ndarray


@dataclass(frozen=True)
class DecaySchedule:
    kind: str = "exponential"        # "exponential" | "linear"
    decay_steps: int = 200           # number of rescales until zero
    steps_per_rescale: int = 200     # fine-tune steps between rescales
    post_zero_steps: int = 0         # extra fine-tuning with biases at zero
    ratio: float = 0.95              # exponential only; per-rescale factor

    def __post_init__(self):
        if self.kind not in ("exponential", "linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be >= 1")
        if not 0 < self.ratio < 1:
            raise ValueError(f"ratio must be in (0, 1), got {self.ratio}")

    def scales(self) -> Array:
        """Bias scale after each rescale; monotone non-increasing, ends at 0.

        Exponential multiplies by `ratio` each step and snaps to exactly 0 at
        the final step (pure geometric decay never reaches zero)."""
        steps = np.arange(1, self.decay_steps + 1, dtype=np.float64)
        if self.kind == "linear":
            out = 1.0 - steps / self.decay_steps
        else:
            out = self.ratio ** steps
        out[-1] = 0.0
        return out


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 100.0
    optimizer: str = "adam"
    learning_rate: float = 5e-6
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    bias_scale: float
    loss: float
    top1: float


@dataclass
class DecayTrajectory:
    points: list[TrajectoryPoint]
    completed: bool = True

    @property
    def final_bias_scale(self) -> float:
        return self.points[-1].bias_scale

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("step", "bias_scale", "loss", "top1"))
            for p in self.points:
                writer.writerow((p.step, repr(p.bias_scale), repr(p.loss), repr(p.top1)))
        return Path(path)


def distillation_loss(student_logits: Array, teacher_logits: Array,
                      temperature: float) -> float:
    """Cross-entropy between softmax(teacher/T) targets and
    softmax(student/T); at matched logits this is the soft-target entropy."""
    student = np.atleast_2d(F.as_f64(student_logits))
    teacher = np.atleast_2d(F.as_f64(teacher_logits))
    if student.shape != teacher.shape:
        raise ValueError(
            f"logit shapes differ: student {student.shape} vs teacher {teacher.shape}")
    targets = F.softmax(teacher / temperature)
    loss, _ = F.soft_cross_entropy(student, targets, temperature)
    return loss


def _distill_step(student, teacher, xb, temperature, weight_names):
    xb_nchw = np.moveaxis(xb, -1, 1)
    teacher_logits = nets._execute(teacher.spec, teacher.params, xb_nchw,
                                   nets._FastOps()).logits
    targets = F.softmax(teacher_logits / temperature)
    run = nets._execute(student.spec, student.params, xb_nchw, nets._GraphOps())
    loss = ad.soft_cross_entropy(run.logits, targets, temperature)
    ad.backward(loss, np.ones(()))
    grads = {}
    for name in weight_names:
        node = run.param_nodes[name]
        grads[name] = node.grad if node.grad is not None else np.zeros_like(node.data)
    return float(loss.data), grads


def run_decay(checkpoint: nets.Checkpoint, teacher: nets.Checkpoint, dataset,
              schedule: DecaySchedule, config: DistillConfig,
              eval_dataset=None) -> tuple[nets.Checkpoint, DecayTrajectory]:
    """Alternate bias rescaling with distillation fine-tuning; returns the
    zero-bias student and the per-rescale trajectory. A non-finite loss
    aborts, returning the trajectory collected so far."""
    student = checkpoint.copy()
    eval_on = eval_dataset if eval_dataset is not None else dataset
    original_biases = {name: student.params[name].copy() for name in student.params
                       if nets.param_role(name) in nets.BIAS_ROLES}
    weight_names = [name for name in student.params
                    if nets.param_role(name) in ("kernel", "weight")]
    opt = make_optimizer(config.optimizer, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    n = len(dataset)

    def fine_tune(steps: int) -> float | None:
        """Returns the last batch loss, or None on divergence."""
        last = 0.0
        for _ in range(steps):
            idx = rng.choice(n, size=min(config.batch_size, n), replace=False)
            loss, grads = _distill_step(student, teacher, dataset.images[idx],
                                        config.temperature, weight_names)
            if not np.isfinite(loss):
                return None
            if config.learning_rate != 0.0:
                opt.step(student.params, grads)
            last = loss
        return last

    def first_batch_loss() -> float:
        idx = np.arange(min(config.batch_size, n))
        loss, _ = _distill_step(student, teacher, dataset.images[idx],
                                config.temperature, weight_names)
        return loss

    points = [TrajectoryPoint(0, 1.0, first_batch_loss(),
                              nets.evaluate_topk(student, eval_on, 1))]
    for step, scale in enumerate(schedule.scales(), start=1):
        for name, orig in original_biases.items():
            student.params[name] = scale * orig
        loss = fine_tune(schedule.steps_per_rescale)
        if loss is None:
            return student, DecayTrajectory(points, completed=False)
        if schedule.steps_per_rescale == 0:
            loss = first_batch_loss()
        points.append(TrajectoryPoint(step, float(scale), loss,
                                      nets.evaluate_topk(student, eval_on, 1)))
    if schedule.post_zero_steps:
        loss = fine_tune(schedule.post_zero_steps)
        if loss is None:
            return student, DecayTrajectory(points, completed=False)
        points.append(TrajectoryPoint(schedule.decay_steps + 1, 0.0, loss,
                                      nets.evaluate_topk(student, eval_on, 1)))
    return student, DecayTrajectory(points)


@dataclass(frozen=True)
class RecoveryReport:
    recovery: float    # final top-1 / teacher top-1
    min_top1: float    # worst intermediate accuracy
    worst_dip: float   # min_top1 / teacher top-1


def recovery_report(trajectory: DecayTrajectory, teacher_accuracy: float) -> RecoveryReport:
    if teacher_accuracy <= 0:
        raise ValueError("teacher accuracy must be positive")
    accs = [p.top1 for p in trajectory.points]
    return RecoveryReport(recovery=accs[-1] / teacher_accuracy,
                          min_top1=min(accs),
                          worst_dip=min(accs) / teacher_accuracy)
