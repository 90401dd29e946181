/**
 * Serve loop: one plan line in, one report line out, strictly in epoch
 * order.  EOF on the plan stream is a normal end of session.
 */
import * as readline from 'node:readline';
import { Readable, Writable } from 'node:stream';

import { Trainer } from './dummy-trainer';
import { parsePlanLine, ProtocolError, reportLine } from './protocol';

export interface ServeOptions {
  input: Readable;
  output: Writable;
  errors: Writable;
  trainer: Trainer;
}

export async function serve(options: ServeOptions): Promise<number> {
  const { input, output, errors, trainer } = options;
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  let cursor = 0;
  try {
    for await (const line of rl) {
      if (line.trim() === '') {
        continue;
      }
      const { plan, warnings } = parsePlanLine(line);
      for (const warning of warnings) {
        errors.write(`bridge: warning: ${warning}\n`);
      }
      if (plan.global_epoch !== cursor) {
        throw new ProtocolError(
          `out-of-order plan: expected epoch ${cursor}, got ${plan.global_epoch}`,
        );
      }
      const result = trainer.runEpoch(plan);
      output.write(
        reportLine({
          global_epoch: plan.global_epoch,
          map50: result.map50,
          val_loss: result.valLoss,
        }) + '\n',
      );
      cursor += 1;
    }
  } catch (err) {
    if (err instanceof ProtocolError) {
      errors.write(`bridge: protocol error: ${err.message}\n`);
      return 2;
    }
    throw err;
  } finally {
    rl.close();
  }
  return 0;
}
