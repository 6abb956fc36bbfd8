/**
 * Record shapes shared with the engine's line-delimited formats.
 *
 * One JSON object per line; `u` is optional and defaults to 1.0 on the
 * engine side. Decision logs extend the record with the weight, the kept
 * flag and the uniform draw that produced it.
 */

export interface BalanceRecord {
  id: string;
  s: number[];
  y: number[];
  u?: number;
}

export interface WeightRow {
  id: string;
  q: number;
}

export interface Decision extends BalanceRecord {
  q: number;
  kept: boolean;
  draw: number;
}

export class RecordError extends Error {
  constructor(readonly index: number, message: string) {
    super(`record ${index}: ${message}`);
    this.name = "RecordError";
  }
}

function isBinaryVector(xs: unknown): xs is number[] {
  return Array.isArray(xs) && xs.every((v) => v === 0 || v === 1);
}

/** Validate a batch client-side so defects carry the record index. */
export function validateRecords(records: readonly BalanceRecord[]): void {
  records.forEach((r, i) => {
    if (typeof r.id !== "string" || r.id.length === 0) {
      throw new RecordError(i, "id must be a non-empty string");
    }
    if (!isBinaryVector(r.s)) {
      throw new RecordError(i, "s must be an array of 0/1");
    }
    if (!isBinaryVector(r.y)) {
      throw new RecordError(i, "y must be an array of 0/1");
    }
    if (r.u !== undefined && !(typeof r.u === "number" && r.u > 0)) {
      throw new RecordError(i, `u must be a positive number, got ${r.u}`);
    }
  });
}

/** Serialize records to the engine's ingestion format. */
export function toLines(records: readonly BalanceRecord[]): string {
  validateRecords(records);
  return records
    .map((r) =>
      JSON.stringify({ id: r.id, s: r.s, y: r.y, u: r.u ?? 1.0 })
    )
    .join("\n") + "\n";
}

export function parseLines<T>(text: string): T[] {
  const out: T[] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (trimmed.length > 0) {
      out.push(JSON.parse(trimmed) as T);
    }
  }
  return out;
}
