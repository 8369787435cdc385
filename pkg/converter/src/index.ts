export { parseSafetensors, serializeSafetensors, toFloat64, fromFloat64 } from './safetensors.js';
export type { SafetensorsFile, TensorEntry } from './safetensors.js';
export { parseExpr1, serializeExpr1, FORMAT_VERSION } from './expr1.js';
export type { Expr1Entry, Expr1File } from './expr1.js';
export { convert, formatReport, replicateGrayToRgb, ConversionError } from './convert.js';
export type { ConversionResult, ConversionReportRow } from './convert.js';
export { defaultConversionMap, torchResnet18Renames, canonicalEntryOrder } from './mapping.js';
export type { ConversionMap } from './mapping.js';
export { inspect } from './inspect.js';
