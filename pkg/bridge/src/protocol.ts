/**
 * The newline-delimited JSON plan/report protocol.
 *
 * One EpochPlan record arrives per line on the plan stream; the bridge must
 * answer exactly one MetricReport per consumed plan, with a matching epoch
 * index.  Unknown plan fields are tolerated with a warning (forward
 * compatibility); missing or malformed required fields are protocol errors.
 */

export interface LossWeights {
  box: number;
  cls: number;
  dfl: number;
}

export interface EpochPlan {
  global_epoch: number;
  stage: number;
  frozen_layers: number;
  learning_rate: number;
  momentum: number;
  weight_decay: number;
  loss_weights: LossWeights;
  preset: Record<string, number>;
  batch_size: number;
}

export interface MetricReport {
  global_epoch: number;
  map50: number;
  val_loss: number;
}

export class ProtocolError extends Error {}

const REQUIRED_FIELDS = [
  'global_epoch',
  'stage',
  'frozen_layers',
  'learning_rate',
  'momentum',
  'weight_decay',
  'loss_weights',
  'preset',
  'batch_size',
] as const;

const NUMERIC_FIELDS = [
  'global_epoch',
  'stage',
  'frozen_layers',
  'learning_rate',
  'momentum',
  'weight_decay',
  'batch_size',
] as const;

export interface ParsedPlan {
  plan: EpochPlan;
  warnings: string[];
}

export function parsePlanLine(line: string): ParsedPlan {
  let record: unknown;
  try {
    record = JSON.parse(line);
  } catch (err) {
    throw new ProtocolError(`unparseable plan record: ${(err as Error).message}`);
  }
  if (typeof record !== 'object' || record === null || Array.isArray(record)) {
    throw new ProtocolError('plan record is not a JSON object');
  }
  const raw = record as Record<string, unknown>;

  const missing = REQUIRED_FIELDS.filter((f) => !(f in raw));
  if (missing.length > 0) {
    throw new ProtocolError(`plan record missing fields: ${missing.join(', ')}`);
  }
  for (const field of NUMERIC_FIELDS) {
    if (typeof raw[field] !== 'number' || !Number.isFinite(raw[field] as number)) {
      throw new ProtocolError(`plan field ${field} is not a finite number`);
    }
  }
  const lw = raw.loss_weights as Record<string, unknown>;
  for (const part of ['box', 'cls', 'dfl']) {
    if (typeof lw?.[part] !== 'number') {
      throw new ProtocolError(`loss_weights.${part} is not a number`);
    }
  }
  if (typeof raw.preset !== 'object' || raw.preset === null) {
    throw new ProtocolError('plan preset is not an object');
  }

  const warnings = Object.keys(raw)
    .filter((key) => !(REQUIRED_FIELDS as readonly string[]).includes(key))
    .map((key) => `ignoring unknown plan field ${key}`);

  return { plan: raw as unknown as EpochPlan, warnings };
}

export function reportLine(report: MetricReport): string {
  // key-sorted to match the scheduler's serializer byte for byte
  return JSON.stringify({
    global_epoch: report.global_epoch,
    map50: report.map50,
    val_loss: report.val_loss,
  });
}
