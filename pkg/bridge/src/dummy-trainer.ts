/**
 * A trainer stand-in so the bridge is testable without any ML framework.
 *
 * It replays a scripted mAP trajectory (the last value repeats once the
 * script is exhausted) and reports val_loss = max(0, 1 - mAP) — the same
 * rule the scheduler's simulation harness uses, so traces from either path
 * compare exactly.  Plan hyperparameters are applied in the narrow sense of
 * being recorded; the augmentation preset is validated but not interpreted.
 */
import { EpochPlan } from './protocol';

export interface EpochResult {
  map50: number;
  valLoss: number;
}

export interface Trainer {
  runEpoch(plan: EpochPlan): EpochResult;
}

export class DummyTrainer implements Trainer {
  readonly applied: EpochPlan[] = [];

  constructor(private readonly script: number[]) {
    if (script.length === 0) {
      throw new Error('dummy trainer needs at least one scripted mAP value');
    }
    for (const v of script) {
      if (!(v >= 0 && v <= 1)) {
        throw new Error(`scripted mAP ${v} outside [0, 1]`);
      }
    }
  }

  runEpoch(plan: EpochPlan): EpochResult {
    this.applied.push(plan);
    const map50 = this.script[Math.min(plan.global_epoch, this.script.length - 1)];
    return { map50, valLoss: Math.max(0, 1 - map50) };
  }
}

export function parseScript(text: string): number[] {
  return text.split(',').map((part) => {
    const v = Number(part.trim());
    if (!Number.isFinite(v)) {
      throw new Error(`bad scripted mAP value: ${part}`);
    }
    return v;
  });
}
