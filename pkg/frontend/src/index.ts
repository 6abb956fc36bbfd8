export {
  BalanceRecord,
  Decision,
  RecordError,
  WeightRow,
  parseLines,
  toLines,
  validateRecords,
} from "./records.js";
export { EngineError, engineBinary, runEngine } from "./cli.js";
export {
  AuditMeasures,
  AuditReport,
  BalanceOptions,
  CheckpointInfo,
  Session,
  SubsampleOptions,
  UsageError,
  generateSynthetic,
} from "./session.js";
