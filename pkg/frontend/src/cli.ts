/** Thin wrapper around the databalance command-line executable. */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Executable name; override with DATABALANCE_BIN when not on PATH. */
export function engineBinary(): string {
  return process.env.DATABALANCE_BIN ?? "databalance";
}

export class EngineError extends Error {
  constructor(
    readonly exitCode: number,
    readonly stderr: string,
    argv: string[]
  ) {
    super(
      `databalance ${argv[0]} exited with ${exitCode}: ${stderr.trim()}`
    );
    this.name = "EngineError";
  }
}

export function runEngine(argv: string[]): string {
  const proc = spawnSync(engineBinary(), argv, {
    encoding: "utf-8",
    maxBuffer: 1 << 28,
  });
  if (proc.error) {
    throw proc.error;
  }
  if (proc.status !== 0) {
    throw new EngineError(proc.status ?? -1, proc.stderr ?? "", argv);
  }
  return proc.stdout ?? "";
}

/** Scratch directory for one engine invocation's input/output files. */
export function withScratchDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "databalance-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
