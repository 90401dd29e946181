#!/usr/bin/env node
/**
 * platekit-trainer-bridge --script 0.1,0.2,...
 *
 * Reads newline-delimited EpochPlan JSON on stdin, runs the dummy trainer
 * one epoch per plan, and writes MetricReport JSON lines on stdout.
 * Exit codes: 0 clean EOF, 1 usage, 2 protocol error.
 */
import { serve } from './bridge';
import { DummyTrainer, parseScript } from './dummy-trainer';

function usage(message: string): never {
  process.stderr.write(`${message}\nusage: main.js --script v0,v1,...\n`);
  process.exit(1);
}

async function main(): Promise<number> {
  const args = process.argv.slice(2);
  let script: number[] | null = null;
  for (let i = 0; i < args.length; i += 1) {
    if (args[i] === '--script') {
      if (i + 1 >= args.length) {
        usage('--script needs a value');
      }
      try {
        script = parseScript(args[i + 1]);
      } catch (err) {
        usage((err as Error).message);
      }
      i += 1;
    } else {
      usage(`unknown argument: ${args[i]}`);
    }
  }
  if (script === null) {
    usage('missing --script');
  }
  return serve({
    input: process.stdin,
    output: process.stdout,
    errors: process.stderr,
    trainer: new DummyTrainer(script),
  });
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`bridge: fatal: ${err}\n`);
    process.exit(2);
  },
);
