/**
 * Conversion from a framework-native ResNet-18 parameter map (safetensors)
 * to an EXPR1 checkpoint: renames tensors, optionally adapts a grayscale
 * stem to RGB, and emits entries in the canonical EXPR1 order so a
 * load-then-save round trip through the training library is byte-stable.
 */

import { createHash } from 'node:crypto';
import type { SafetensorsFile, TensorEntry } from './safetensors.js';
import { fromFloat64, toFloat64 } from './safetensors.js';
import type { Expr1Entry, Expr1File } from './expr1.js';
import { FORMAT_VERSION } from './expr1.js';
import type { ConversionMap } from './mapping.js';
import { canonicalEntryOrder } from './mapping.js';

export class ConversionError extends Error {}

export interface ConversionReportRow {
  name: string;
  sourceName: string;
  dtype: 'F32' | 'F64';
  shape: number[];
  sha256: string;
}

export interface ConversionResult {
  file: Expr1File;
  rows: ConversionReportRow[];
}

const STAGE_WIDTHS = [64, 128, 256, 512];

/**
 * Expected trunk shapes for a standard-width ResNet-18. The head is
 * validated separately because its row count is the source's class count.
 */
export function expectedTrunkShapes(inputChannels: number): Map<string, number[]> {
  const shapes = new Map<string, number[]>();
  const vec = (name: string, n: number) => {
    for (const suffix of ['gamma', 'beta', 'running_mean', 'running_var']) {
      shapes.set(`${name}.${suffix}`, [n]);
    }
  };
  shapes.set('stem.conv.weight', [64, inputChannels, 7, 7]);
  vec('stem.bn', 64);
  for (let stage = 1; stage <= 4; stage++) {
    const width = STAGE_WIDTHS[stage - 1];
    for (let block = 1; block <= 2; block++) {
      const inWidth = stage > 1 && block === 1 ? STAGE_WIDTHS[stage - 2] : width;
      const p = `stage${stage}.block${block}`;
      shapes.set(`${p}.conv1.weight`, [width, inWidth, 3, 3]);
      shapes.set(`${p}.conv2.weight`, [width, width, 3, 3]);
      vec(`${p}.bn1`, width);
      vec(`${p}.bn2`, width);
      if (stage > 1 && block === 1) {
        shapes.set(`${p}.down.conv.weight`, [width, inWidth, 1, 1]);
        vec(`${p}.down.bn`, width);
      }
    }
  }
  return shapes;
}

function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

/** Divide a single-input-channel kernel by 3 and replicate it across RGB. */
export function replicateGrayToRgb(entry: TensorEntry): TensorEntry {
  const [k, c, kh, kw] = entry.shape;
  if (entry.shape.length !== 4 || c !== 1) {
    throw new ConversionError(
      `replicate_gray_to_rgb requires a K x 1 x kh x kw stem, got ${entry.name} with shape ${entry.shape.join('x')}`,
    );
  }
  const src = toFloat64(entry);
  const out = new Float64Array(k * 3 * kh * kw);
  const plane = kh * kw;
  for (let f = 0; f < k; f++) {
    for (let p = 0; p < plane; p++) {
      const third = src[f * plane + p] / 3;
      for (let ch = 0; ch < 3; ch++) out[(f * 3 + ch) * plane + p] = third;
    }
  }
  return { name: entry.name, dtype: entry.dtype, shape: [k, 3, kh, kw], data: fromFloat64(out, entry.dtype) };
}

export function convert(source: SafetensorsFile, map: ConversionMap): ConversionResult {
  const bySourceName = new Map<string, TensorEntry>();
  for (const t of source.tensors) bySourceName.set(t.name, t);

  const sourceFor = new Map<string, string>();
  for (const [src, dst] of Object.entries(map.renames)) {
    if (sourceFor.has(dst)) {
      throw new ConversionError(`two source tensors mapped to ${dst}`);
    }
    sourceFor.set(dst, src);
  }

  const inputChannels = map.channelAdaptation === 'replicate_gray_to_rgb' ? 3 : undefined;
  let trunkShapes: Map<string, number[]> | null = null;

  const entries: Expr1Entry[] = [];
  const rows: ConversionReportRow[] = [];
  let numClasses: number | null = null;

  for (const name of canonicalEntryOrder()) {
    const isHead = name.startsWith('head.');
    const sourceName = sourceFor.get(name);
    if (sourceName === undefined || !bySourceName.has(sourceName)) {
      if (isHead && map.headAdaptation === 'mark_for_reinit') continue;
      throw new ConversionError(`no source tensor for ${name}`);
    }
    let tensor = bySourceName.get(sourceName)!;
    if (name === 'stem.conv.weight' && map.channelAdaptation === 'replicate_gray_to_rgb') {
      tensor = replicateGrayToRgb(tensor);
    }
    if (trunkShapes === null) {
      // Defer until the stem is seen so channel adaptation fixes the width.
      trunkShapes = expectedTrunkShapes(inputChannels ?? tensor.shape[1]);
    }
    if (isHead) {
      if (name === 'head.weight') {
        if (tensor.shape.length !== 2 || tensor.shape[1] !== 512) {
          throw new ConversionError(`shape mismatch for ${name}: got ${tensor.shape.join('x')}, want N x 512`);
        }
        numClasses = tensor.shape[0];
      } else if (numClasses !== null && !sameShape(tensor.shape, [numClasses])) {
        throw new ConversionError(`shape mismatch for ${name}: got ${tensor.shape.join('x')}, want ${numClasses}`);
      }
    } else {
      const want = trunkShapes.get(name)!;
      if (!sameShape(tensor.shape, want)) {
        throw new ConversionError(
          `shape mismatch for ${name}: got ${tensor.shape.join('x')}, want ${want.join('x')}`,
        );
      }
    }
    entries.push({ name, dtype: tensor.dtype, shape: tensor.shape, data: tensor.data });
    rows.push({
      name,
      sourceName,
      dtype: tensor.dtype,
      shape: tensor.shape,
      sha256: createHash('sha256').update(tensor.data).digest('hex'),
    });
  }

  const metadata: Record<string, string> = {
    created_by: 'expr1-converter',
    channel_adaptation: map.channelAdaptation,
    head_policy: map.headAdaptation === 'mark_for_reinit' ? 'reinit_head' : 'strict',
  };
  if (numClasses !== null) metadata.num_classes = String(numClasses);
  for (const [key, value] of Object.entries(source.metadata)) {
    if (!/\s/.test(key) && !value.includes('\n')) metadata[`source.${key}`] = value;
  }

  return { file: { entries, metadata, formatVersion: FORMAT_VERSION }, rows };
}

export function formatReport(rows: ConversionReportRow[]): string {
  const lines = rows.map(
    (r) => `${r.name} ${r.dtype === 'F32' ? 'float32' : 'float64'} ${r.shape.join('x')} sha256=${r.sha256} from=${r.sourceName}`,
  );
  return lines.join('\n') + '\n';
}
