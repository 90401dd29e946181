"""Two-stage adaptive training controller as a deterministic state machine.

Stage 1 runs up to 35 epochs of aggressive learning with progressive layer
unfreezing (12 frozen layers in the first third, then 8, then 4) and ends
on the first of: epoch budget, window convergence (mean of the last 8
epochs' mAP minus the mean of the previous 8 below 0.001) or early stopping
(15 epochs without a new best).  The branch then adapts to performance:
best mAP strictly above 0.7 yields a 45-epoch fully unfrozen conservative
stage 2, otherwise a 55-epoch lightly frozen moderate one.  Stage 2 anneals
the learning rate with a cosine schedule.

Plans and reports cross process boundaries as single-line JSON records with
snake_case keys; a session trace is newline-delimited JSON with one
{"plan": ..., "report": ...} object per epoch.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum

from platekit.augment import AugmentationPhasePreset, stage1_preset, stage2_preset
from platekit.errors import ProtocolError


class Phase(Enum):
    STAGE1 = "stage1"
    STAGE2_CONVERGED = "stage2_converged"
    STAGE2_FALLBACK = "stage2_fallback"
    STOPPED = "stopped"


@dataclass(frozen=True)
class SchedulerConfig:
    stage1_epochs: int = 35
    batch_size: int = 10
    window: int = 8
    convergence_threshold: float = 0.001
    patience: int = 15
    branch_map_threshold: float = 0.7
    stage2_converged_epochs: int = 45
    stage2_fallback_epochs: int = 55
    unfreeze_schedule: tuple[int, int, int] = (12, 8, 4)
    stage2_light_freeze: int = 4
    stage2_patience: int = 15
    lr_aggressive: float = 1e-2
    lr_conservative: float = 1e-3
    lr_moderate: float = 5e-3
    lr_min_ratio: float = 0.01
    momentum: float = 0.937
    weight_decay: float = 0.0005
    loss_weights: tuple[float, float, float] = (7.5, 0.5, 1.5)

    def __post_init__(self):
        if self.window > self.stage1_epochs:
            raise ValueError("window must not exceed stage1_epochs")
        if self.patience < self.window:
            raise ValueError("patience must be >= window")
        for name in ("stage1_epochs", "batch_size", "window", "patience",
                     "stage2_converged_epochs", "stage2_fallback_epochs",
                     "stage2_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class MetricReport:
    global_epoch: int
    map50: float
    val_loss: float

    def __post_init__(self):
        if not 0.0 <= self.map50 <= 1.0:
            raise ValueError(f"map50 {self.map50} outside [0, 1]")
        if self.val_loss < 0:
            raise ValueError("val_loss must be >= 0")


@dataclass(frozen=True)
class EpochPlan:
    global_epoch: int
    stage: int
    frozen_layers: int
    learning_rate: float
    momentum: float
    weight_decay: float
    loss_weights: tuple[float, float, float]
    preset: AugmentationPhasePreset
    batch_size: int


@dataclass(frozen=True)
class SchedulerState:
    phase: Phase = Phase.STAGE1
    history: tuple[MetricReport, ...] = ()
    best_map: float = 0.0
    epochs_since_best: int = 0
    stage2_start: int | None = None
    stage2_budget: int | None = None

    @property
    def next_epoch(self) -> int:
        return len(self.history)

    @property
    def stage2_epochs_done(self) -> int:
        if self.stage2_start is None:
            return 0
        return len(self.history) - self.stage2_start

    def converged(self, config: SchedulerConfig) -> bool:
        """Disjoint consecutive windows: mean(last w) - mean(previous w) < threshold."""
        w = config.window
        if len(self.history) < 2 * w:
            return False
        values = [r.map50 for r in self.history]
        last = sum(values[-w:]) / w
        prev = sum(values[-2 * w:-w]) / w
        return last - prev < config.convergence_threshold


def initial_state() -> SchedulerState:
    return SchedulerState()


def cosine_lr(t: int, total: int, lr_max: float, lr_min: float) -> float:
    """lr(t) = lr_min + (lr_max - lr_min)/2 * (1 + cos(pi * t / total))."""
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / total))


def _stage1_frozen_layers(epoch: int, config: SchedulerConfig) -> int:
    third = math.ceil(config.stage1_epochs / 3)
    return config.unfreeze_schedule[min(epoch // third, 2)]


def next_plan(state: SchedulerState, config: SchedulerConfig) -> EpochPlan:
    """Hyperparameter directive for the next epoch."""
    if state.phase is Phase.STOPPED:
        raise RuntimeError("next_plan called on a stopped scheduler")
    epoch = state.next_epoch
    if state.phase is Phase.STAGE1:
        return EpochPlan(
            global_epoch=epoch,
            stage=1,
            frozen_layers=_stage1_frozen_layers(epoch, config),
            learning_rate=config.lr_aggressive,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
            loss_weights=config.loss_weights,
            preset=stage1_preset(),
            batch_size=config.batch_size,
        )
    if state.phase is Phase.STAGE2_CONVERGED:
        base, frozen = config.lr_conservative, 0
    else:
        base, frozen = config.lr_moderate, config.stage2_light_freeze
    return EpochPlan(
        global_epoch=epoch,
        stage=2,
        frozen_layers=frozen,
        learning_rate=cosine_lr(state.stage2_epochs_done, state.stage2_budget,
                                base, base * config.lr_min_ratio),
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        loss_weights=config.loss_weights,
        preset=stage2_preset(),
        batch_size=config.batch_size,
    )


def observe(state: SchedulerState, report: MetricReport,
            config: SchedulerConfig) -> SchedulerState:
    """Fold one metric report into the state; reports must arrive in order."""
    if state.phase is Phase.STOPPED:
        raise RuntimeError("observe called on a stopped scheduler")
    if report.global_epoch != state.next_epoch:
        raise ProtocolError(
            f"out-of-order report: expected epoch {state.next_epoch}, got {report.global_epoch}"
        )
    if report.map50 > state.best_map:
        best, since = report.map50, 0
    else:
        best, since = state.best_map, state.epochs_since_best + 1
    return replace(state, history=state.history + (report,), best_map=best,
                   epochs_since_best=since)


def stage1_finished(state: SchedulerState, config: SchedulerConfig) -> bool:
    if state.phase is not Phase.STAGE1:
        return False
    return (
        len(state.history) >= config.stage1_epochs
        or state.epochs_since_best >= config.patience
        or state.converged(config)
    )


def stage2_finished(state: SchedulerState, config: SchedulerConfig) -> bool:
    if state.phase not in (Phase.STAGE2_CONVERGED, Phase.STAGE2_FALLBACK):
        return False
    return (
        state.stage2_epochs_done >= state.stage2_budget
        or state.epochs_since_best >= config.stage2_patience
    )


def stage_transition(state: SchedulerState, config: SchedulerConfig) -> SchedulerState:
    """Branch on stage-1 performance: mAP strictly above the threshold gets
    the shorter fully unfrozen stage 2, anything else the longer fallback.

    The no-improvement counter resets so stage-1 early stopping cannot
    immediately re-trigger in stage 2.
    """
    if state.phase is not Phase.STAGE1:
        raise RuntimeError(f"stage_transition called in phase {state.phase}")
    if not stage1_finished(state, config):
        raise RuntimeError("stage_transition called before stage 1 finished")
    if state.best_map > config.branch_map_threshold:
        phase, budget = Phase.STAGE2_CONVERGED, config.stage2_converged_epochs
    else:
        phase, budget = Phase.STAGE2_FALLBACK, config.stage2_fallback_epochs
    return replace(state, phase=phase, stage2_start=len(state.history),
                   stage2_budget=budget, epochs_since_best=0)


class SessionAborted(ProtocolError):
    """Trainer callback failed; carries the partial trace."""

    def __init__(self, message, pairs, state):
        super().__init__(message)
        self.pairs = pairs
        self.state = state


def run_session(trainer, config: SchedulerConfig, on_pair=None, resume_pairs=None):
    """Drive the state machine to Stopped against a metric-producing callback.

    ``resume_pairs`` replays the recorded (plan, report) pairs of an
    interrupted trace before handing control to ``trainer``; determinism
    guarantees the continuation is identical to an uninterrupted run.

    Returns (pairs, final_state).
    """
    state = initial_state()
    pairs = []
    replay = list(resume_pairs) if resume_pairs else []

    while state.phase is not Phase.STOPPED:
        plan = next_plan(state, config)
        if replay:
            recorded_plan, report = replay.pop(0)
            if recorded_plan != plan:
                raise ProtocolError(
                    f"resume trace diverges from the regenerated plan at epoch "
                    f"{plan.global_epoch} (different config?)"
                )
        else:
            try:
                report = trainer(plan)
            except Exception as exc:
                raise SessionAborted(
                    f"trainer failed at epoch {plan.global_epoch}: {exc}", pairs, state
                ) from exc
        state = observe(state, report, config)
        pairs.append((plan, report))
        if on_pair is not None:
            on_pair(plan, report)
        if stage1_finished(state, config):
            state = stage_transition(state, config)
        elif stage2_finished(state, config):
            state = replace(state, phase=Phase.STOPPED)
    return pairs, state


# --- wire format -----------------------------------------------------------

def plan_to_json(plan: EpochPlan) -> str:
    record = asdict(plan)
    record["loss_weights"] = {"box": plan.loss_weights[0], "cls": plan.loss_weights[1],
                              "dfl": plan.loss_weights[2]}
    return json.dumps(record, sort_keys=True)


def report_to_json(report: MetricReport) -> str:
    return json.dumps(asdict(report), sort_keys=True)


_PLAN_REQUIRED = {"global_epoch", "stage", "frozen_layers", "learning_rate",
                  "momentum", "weight_decay", "loss_weights", "preset", "batch_size"}


def plan_from_json(line: str) -> EpochPlan:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable plan record: {exc}") from None
    missing = _PLAN_REQUIRED - set(record)
    if missing:
        raise ProtocolError(f"plan record missing fields: {sorted(missing)}")
    lw = record["loss_weights"]
    try:
        return EpochPlan(
            global_epoch=int(record["global_epoch"]),
            stage=int(record["stage"]),
            frozen_layers=int(record["frozen_layers"]),
            learning_rate=float(record["learning_rate"]),
            momentum=float(record["momentum"]),
            weight_decay=float(record["weight_decay"]),
            loss_weights=(float(lw["box"]), float(lw["cls"]), float(lw["dfl"])),
            preset=AugmentationPhasePreset(**record["preset"]),
            batch_size=int(record["batch_size"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid plan record: {exc}") from None


def report_from_json(line: str) -> MetricReport:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable report record: {exc}") from None
    try:
        return MetricReport(
            global_epoch=int(record["global_epoch"]),
            map50=float(record["map50"]),
            val_loss=float(record["val_loss"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid report record: {exc}") from None


def trace_line(plan: EpochPlan, report: MetricReport) -> str:
    return json.dumps(
        {"plan": json.loads(plan_to_json(plan)), "report": json.loads(report_to_json(report))},
        sort_keys=True,
    )


def read_trace(text: str):
    """Parse a newline-delimited session trace back into (plan, report) pairs."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            plan = plan_from_json(json.dumps(record["plan"]))
            report = report_from_json(json.dumps(record["report"]))
        except (KeyError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"trace line {lineno}: {exc}") from None
        pairs.append((plan, report))
    return pairs


# --- state snapshots (mid-run persistence) ---------------------------------

def state_to_json(state: SchedulerState) -> str:
    return json.dumps({
        "phase": state.phase.value,
        "history": [asdict(r) for r in state.history],
        "best_map": state.best_map,
        "epochs_since_best": state.epochs_since_best,
        "stage2_start": state.stage2_start,
        "stage2_budget": state.stage2_budget,
    }, sort_keys=True)


def state_from_json(text: str) -> SchedulerState:
    record = json.loads(text)
    return SchedulerState(
        phase=Phase(record["phase"]),
        history=tuple(MetricReport(**r) for r in record["history"]),
        best_map=record["best_map"],
        epochs_since_best=record["epochs_since_best"],
        stage2_start=record["stage2_start"],
        stage2_budget=record["stage2_budget"],
    )
