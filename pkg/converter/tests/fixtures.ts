/** Deterministic synthetic ResNet-18 state dicts for converter tests. */

import type { SafetensorsFile, TensorEntry } from '../src/safetensors.js';
import { fromFloat64, numel } from '../src/safetensors.js';
import { expectedTrunkShapes } from '../src/convert.js';
import { torchResnet18Renames, canonicalEntryOrder } from '../src/mapping.js';

/** Cheap deterministic pseudo-random stream (splitmix64-style on doubles). */
export function fillValues(seedTag: string, n: number): Float64Array {
  let h = 2166136261 >>> 0;
  for (const ch of seedTag) {
    h = Math.imul(h ^ ch.charCodeAt(0), 16777619) >>> 0;
  }
  const out = new Float64Array(n);
  let state = h || 1;
  for (let i = 0; i < n; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    out[i] = (state / 2 ** 32 - 0.5) * 0.2;
  }
  return out;
}

export interface FixtureOptions {
  numClasses?: number;
  inputChannels?: number;
  dtype?: 'F32' | 'F64';
  includeNumBatchesTracked?: boolean;
}

/**
 * Builds a torchvision-named ResNet-18 parameter map whose shapes match the
 * converter's expectations. Running variances are offset to stay positive.
 */
export function makeTorchStateDict(options: FixtureOptions = {}): SafetensorsFile {
  const numClasses = options.numClasses ?? 8;
  const inputChannels = options.inputChannels ?? 3;
  const dtype = options.dtype ?? 'F32';
  const renames = torchResnet18Renames();
  const sourceFor = new Map<string, string>();
  for (const [src, dst] of Object.entries(renames)) sourceFor.set(dst, src);

  const shapes = expectedTrunkShapes(inputChannels);
  shapes.set('head.weight', [numClasses, 512]);
  shapes.set('head.bias', [numClasses]);

  const tensors: TensorEntry[] = [];
  for (const name of canonicalEntryOrder()) {
    const shape = shapes.get(name)!;
    const values = fillValues(name, numel(shape));
    if (name.endsWith('running_var')) {
      for (let i = 0; i < values.length; i++) values[i] = 1.0 + Math.abs(values[i]);
    }
    tensors.push({ name: sourceFor.get(name)!, dtype, shape, data: fromFloat64(values, dtype) });
  }
  if (options.includeNumBatchesTracked) {
    // torch state dicts carry this int64 counter; the converter must drop it
    // because it is absent from the rename map.
    tensors.push({ name: 'bn1.num_batches_tracked', dtype, shape: [], data: fromFloat64(new Float64Array([3]), dtype) });
  }
  return { tensors, metadata: { format: 'pt' } };
}
