/**
 * A session wraps one engine checkpoint and exposes fit, weigh, subsample
 * and audit over in-memory records. All computation happens in the engine
 * process; this class only marshals line-delimited files and flags, so its
 * results are byte-identical to driving the CLI by hand.
 */

import {
  copyFileSync,
  mkdtempSync,
  readFileSync,
  rmSync,
  writeFileSync,
} from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { runEngine, withScratchDir } from "./cli.js";
import {
  BalanceRecord,
  Decision,
  WeightRow,
  parseLines,
  toLines,
} from "./records.js";

export interface BalanceOptions {
  /** Target prevalence per attribute (scalar broadcasts). */
  pi: number | number[];
  /** Mean weight / subsampling rate. */
  eta: number;
  epsD?: number;
  epsR?: number;
  qMax?: number;
  vLevel?: number;
  tau0?: number;
  schedule?: "inverse_sqrt" | "constant";
  epochs?: number;
  noShuffle?: boolean;
}

export interface CheckpointInfo {
  formatVersion: number;
  layoutVersion: number;
  m: number;
  c: number;
  pi: number[];
  epsD: number;
  epsR: number;
  eta: number;
  qMax: number;
  vLevel: number;
  tau0: number;
  schedule: string;
  updates: number;
}

export interface SubsampleOptions {
  mode?: "bernoulli" | "topq";
  rateHint?: number;
}

export interface AuditMeasures {
  rb: number;
  ab: number;
  pearson_median_abs: number | null;
  pearson_max_abs: number | null;
  prevalence: number[];
  [key: string]: unknown;
}

export interface AuditReport {
  pi: number[];
  before: AuditMeasures;
  after?: AuditMeasures;
}

export class UsageError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UsageError";
  }
}

function piFlag(pi: number | number[]): string {
  return Array.isArray(pi) ? pi.join(",") : String(pi);
}

function fitArgs(opts: BalanceOptions): string[] {
  const args = ["--pi", piFlag(opts.pi), "--eta", String(opts.eta)];
  if (opts.epsD !== undefined) args.push("--eps-d", String(opts.epsD));
  if (opts.epsR !== undefined) args.push("--eps-r", String(opts.epsR));
  if (opts.qMax !== undefined) args.push("--q-max", String(opts.qMax));
  if (opts.vLevel !== undefined) args.push("--v", String(opts.vLevel));
  if (opts.tau0 !== undefined) args.push("--tau0", String(opts.tau0));
  if (opts.schedule !== undefined) args.push("--schedule", opts.schedule);
  if (opts.epochs !== undefined) args.push("--epochs", String(opts.epochs));
  if (opts.noShuffle) args.push("--no-shuffle");
  return args;
}

export class Session {
  private closed = false;
  private readonly ownedDir: string | null;
  private readonly ckptPath: string;
  readonly info: CheckpointInfo;

  private constructor(ownedDir: string | null, ckptPath: string) {
    this.ownedDir = ownedDir;
    this.ckptPath = ckptPath;
    this.info = readCheckpointInfo(ckptPath);
  }

  /** Fit balancing duals over the records; returns a live session. */
  static fit(
    records: readonly BalanceRecord[],
    opts: BalanceOptions,
    seed: number
  ): Session {
    const dir = mkdtempSync(join(tmpdir(), "databalance-session-"));
    try {
      const input = join(dir, "train.jsonl");
      const ckpt = join(dir, "model.ckpt");
      writeFileSync(input, toLines(records), "utf-8");
      runEngine([
        "fit",
        "--input",
        input,
        "--out",
        ckpt,
        "--seed",
        String(seed),
        ...fitArgs(opts),
      ]);
      rmSync(input, { force: true });
      return new Session(dir, ckpt);
    } catch (err) {
      rmSync(dir, { recursive: true, force: true });
      throw err;
    }
  }

  /** Open an existing checkpoint file (not owned; close() keeps it). */
  static fromCheckpoint(path: string): Session {
    return new Session(null, path);
  }

  private ensureOpen(): void {
    if (this.closed) {
      throw new UsageError("session is closed");
    }
  }

  /** Weights for the given records, in input order. Read-only. */
  weigh(records: readonly BalanceRecord[]): number[] {
    this.ensureOpen();
    return withScratchDir((dir) => {
      const input = join(dir, "records.jsonl");
      const out = join(dir, "weights.jsonl");
      writeFileSync(input, toLines(records), "utf-8");
      runEngine([
        "weigh",
        "--ckpt",
        this.ckptPath,
        "--input",
        input,
        "--out",
        out,
      ]);
      const rows = parseLines<WeightRow>(readFileSync(out, "utf-8"));
      return rows.map((r) => r.q);
    });
  }

  /** Keep/drop mask for the records, deterministic in (seed, id). */
  subsample(
    records: readonly BalanceRecord[],
    seed: number,
    opts: SubsampleOptions = {}
  ): boolean[] {
    return this.subsampleDecisions(records, seed, opts).map((d) => d.kept);
  }

  /** Full decision log (record fields plus q, kept, draw). */
  subsampleDecisions(
    records: readonly BalanceRecord[],
    seed: number,
    opts: SubsampleOptions = {}
  ): Decision[] {
    this.ensureOpen();
    return withScratchDir((dir) => {
      const input = join(dir, "records.jsonl");
      const out = join(dir, "decisions.jsonl");
      writeFileSync(input, toLines(records), "utf-8");
      const args = [
        "subsample",
        "--ckpt",
        this.ckptPath,
        "--input",
        input,
        "--seed",
        String(seed),
        "--out",
        out,
      ];
      if (opts.mode) args.push("--mode", opts.mode);
      if (opts.rateHint !== undefined) {
        args.push("--rate-hint", String(opts.rateHint));
      }
      runEngine(args);
      return parseLines<Decision>(readFileSync(out, "utf-8"));
    });
  }

  /** Bias report for the records under this session's weighting. */
  audit(records: readonly BalanceRecord[]): AuditReport {
    this.ensureOpen();
    return withScratchDir((dir) => {
      const input = join(dir, "records.jsonl");
      const out = join(dir, "report.json");
      writeFileSync(input, toLines(records), "utf-8");
      runEngine([
        "audit",
        "--ckpt",
        this.ckptPath,
        "--input",
        input,
        "--json",
        out,
      ]);
      return JSON.parse(readFileSync(out, "utf-8")) as AuditReport;
    });
  }

  /** Copy the checkpoint to a caller-owned path. */
  saveCheckpoint(path: string): void {
    this.ensureOpen();
    copyFileSync(this.ckptPath, path);
  }

  /** Raw checkpoint bytes (exact-round-trip JSON line). */
  checkpointBytes(): Buffer {
    this.ensureOpen();
    return readFileSync(this.ckptPath);
  }

  /** Release the session's scratch files. Further calls throw UsageError. */
  close(): void {
    if (!this.closed && this.ownedDir) {
      rmSync(this.ownedDir, { recursive: true, force: true });
    }
    this.closed = true;
  }
}

function readCheckpointInfo(path: string): CheckpointInfo {
  const doc = JSON.parse(readFileSync(path, "utf-8"));
  return {
    formatVersion: doc.format_version,
    layoutVersion: doc.layout_version,
    m: doc.m,
    c: doc.c,
    pi: doc.pi,
    epsD: doc.eps_d,
    epsR: doc.eps_r,
    eta: doc.eta,
    qMax: doc.q_max,
    vLevel: doc.v_level,
    tau0: doc.tau0,
    schedule: doc.schedule,
    updates: doc.t,
  };
}

/** Convenience: generate a synthetic stream via the engine. */
export function generateSynthetic(opts: {
  n: number;
  attrPrevalence: number[];
  labelPrevalence?: number[];
  corr?: Array<[number, number, number]>;
  utility?: string;
  seed: number;
}): BalanceRecord[] {
  const args = [
    "synth",
    "--n",
    String(opts.n),
    "--attr-prev",
    opts.attrPrevalence.join(","),
    "--seed",
    String(opts.seed),
  ];
  if (opts.labelPrevalence?.length) {
    args.push("--label-prev", opts.labelPrevalence.join(","));
  }
  if (opts.corr?.length) {
    args.push("--corr", opts.corr.map((t) => t.join(":")).join(","));
  }
  if (opts.utility) {
    args.push("--utility", opts.utility);
  }
  return parseLines<BalanceRecord>(runEngine(args));
}
