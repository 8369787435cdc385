/**
 * Minimal safetensors reader/writer (float32/float64 tensors only).
 *
 * Layout: u64-le header length, JSON header mapping tensor name to
 * { dtype, shape, data_offsets }, then the packed payload. The optional
 * "__metadata__" key carries string key/value pairs.
 */

export interface TensorEntry {
  name: string;
  dtype: 'F32' | 'F64';
  shape: number[];
  /** Raw little-endian payload bytes for this tensor. */
  data: Uint8Array;
}

export interface SafetensorsFile {
  tensors: TensorEntry[];
  metadata: Record<string, string>;
}

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function bytesPerElement(dtype: 'F32' | 'F64'): number {
  return dtype === 'F32' ? 4 : 8;
}

export function parseSafetensors(buf: Uint8Array): SafetensorsFile {
  if (buf.length < 8) {
    throw new Error('safetensors: file shorter than its length prefix');
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const headerLen = Number(view.getBigUint64(0, true));
  if (8 + headerLen > buf.length) {
    throw new Error('safetensors: truncated header');
  }
  const header = JSON.parse(new TextDecoder().decode(buf.subarray(8, 8 + headerLen)));
  const payload = buf.subarray(8 + headerLen);
  const tensors: TensorEntry[] = [];
  let metadata: Record<string, string> = {};
  for (const [name, value] of Object.entries(header)) {
    if (name === '__metadata__') {
      metadata = value as Record<string, string>;
      continue;
    }
    const info = value as { dtype: string; shape: number[]; data_offsets: [number, number] };
    if (info.dtype !== 'F32' && info.dtype !== 'F64') {
      throw new Error(`safetensors: unsupported dtype ${info.dtype} for tensor ${name}`);
    }
    const [start, end] = info.data_offsets;
    if (end > payload.length || end - start !== numel(info.shape) * bytesPerElement(info.dtype)) {
      throw new Error(`safetensors: bad data_offsets for tensor ${name}`);
    }
    tensors.push({ name, dtype: info.dtype, shape: info.shape, data: payload.subarray(start, end) });
  }
  // keep payload order so listings are stable
  tensors.sort((a, b) => a.data.byteOffset - b.data.byteOffset);
  return { tensors, metadata };
}

export function serializeSafetensors(file: SafetensorsFile): Uint8Array {
  const header: Record<string, unknown> = {};
  if (Object.keys(file.metadata).length > 0) {
    header.__metadata__ = file.metadata;
  }
  let offset = 0;
  for (const t of file.tensors) {
    header[t.name] = { dtype: t.dtype, shape: t.shape, data_offsets: [offset, offset + t.data.length] };
    offset += t.data.length;
  }
  const headerBytes = new TextEncoder().encode(JSON.stringify(header));
  const out = new Uint8Array(8 + headerBytes.length + offset);
  new DataView(out.buffer).setBigUint64(0, BigInt(headerBytes.length), true);
  out.set(headerBytes, 8);
  let cursor = 8 + headerBytes.length;
  for (const t of file.tensors) {
    out.set(t.data, cursor);
    cursor += t.data.length;
  }
  return out;
}

export function toFloat64(entry: TensorEntry): Float64Array {
  const view = new DataView(entry.data.buffer, entry.data.byteOffset, entry.data.byteLength);
  const n = numel(entry.shape);
  const out = new Float64Array(n);
  if (entry.dtype === 'F32') {
    for (let i = 0; i < n; i++) out[i] = view.getFloat32(i * 4, true);
  } else {
    for (let i = 0; i < n; i++) out[i] = view.getFloat64(i * 8, true);
  }
  return out;
}

export function fromFloat64(values: Float64Array, dtype: 'F32' | 'F64'): Uint8Array {
  const out = new Uint8Array(values.length * bytesPerElement(dtype));
  const view = new DataView(out.buffer);
  for (let i = 0; i < values.length; i++) {
    if (dtype === 'F32') view.setFloat32(i * 4, values[i], true);
    else view.setFloat64(i * 8, values[i], true);
  }
  return out;
}
