/**
 * EXPR1 checkpoint format: 5-byte magic "EXPR1", newline, UTF-8 text header
 * (version line, `meta key value` lines, `param name dtype dims...` lines)
 * terminated by a blank line, then payloads concatenated in header order,
 * row-major, little-endian.
 */

import { bytesPerElement, numel } from './safetensors.js';

const MAGIC = 'EXPR1\n';
export const FORMAT_VERSION = 1;

export interface Expr1Entry {
  name: string;
  dtype: 'F32' | 'F64';
  shape: number[];
  data: Uint8Array;
}

export interface Expr1File {
  entries: Expr1Entry[];
  metadata: Record<string, string>;
  formatVersion: number;
}

const DTYPE_NAMES: Record<'F32' | 'F64', string> = { F32: 'float32', F64: 'float64' };

export function serializeExpr1(file: Expr1File): Uint8Array {
  const lines = [`version ${file.formatVersion}`];
  for (const key of Object.keys(file.metadata).sort()) {
    if (/\s/.test(key)) throw new Error(`metadata key contains whitespace: ${key}`);
    lines.push(`meta ${key} ${file.metadata[key]}`);
  }
  for (const e of file.entries) {
    if (!/^[a-z0-9._]+$/.test(e.name)) {
      throw new Error(`parameter name outside [a-z0-9._]: ${e.name}`);
    }
    lines.push(`param ${e.name} ${DTYPE_NAMES[e.dtype]} ${e.shape.join(' ')}`.trimEnd());
  }
  const headerBytes = new TextEncoder().encode(MAGIC + lines.join('\n') + '\n\n');
  const payloadLen = file.entries.reduce((a, e) => a + e.data.length, 0);
  const out = new Uint8Array(headerBytes.length + payloadLen);
  out.set(headerBytes, 0);
  let cursor = headerBytes.length;
  for (const e of file.entries) {
    if (e.data.length !== numel(e.shape) * bytesPerElement(e.dtype)) {
      throw new Error(`payload size mismatch for ${e.name}`);
    }
    out.set(e.data, cursor);
    cursor += e.data.length;
  }
  return out;
}

export function parseExpr1(buf: Uint8Array): Expr1File {
  const magicBytes = new TextDecoder().decode(buf.subarray(0, MAGIC.length));
  if (magicBytes !== MAGIC) {
    throw new Error('not an EXPR1 checkpoint (bad magic)');
  }
  let sep = -1;
  for (let i = MAGIC.length; i < buf.length - 1; i++) {
    if (buf[i] === 0x0a && buf[i + 1] === 0x0a) {
      sep = i;
      break;
    }
  }
  if (sep < 0) throw new Error('truncated checkpoint: header not terminated');
  const headerText = new TextDecoder().decode(buf.subarray(MAGIC.length, sep));
  const payload = buf.subarray(sep + 2);
  const metadata: Record<string, string> = {};
  const entries: Expr1Entry[] = [];
  let formatVersion: number | null = null;
  let offset = 0;
  for (const line of headerText.split('\n')) {
    const space = line.indexOf(' ');
    const kind = space < 0 ? line : line.slice(0, space);
    const rest = space < 0 ? '' : line.slice(space + 1);
    if (kind === 'version') {
      formatVersion = parseInt(rest, 10);
    } else if (kind === 'meta') {
      const keyEnd = rest.indexOf(' ');
      if (keyEnd < 0) metadata[rest] = '';
      else metadata[rest.slice(0, keyEnd)] = rest.slice(keyEnd + 1);
    } else if (kind === 'param') {
      const fields = rest.split(' ');
      const name = fields[0];
      const dtype = fields[1] === 'float32' ? 'F32' : fields[1] === 'float64' ? 'F64' : null;
      if (dtype === null) throw new Error(`unknown dtype ${fields[1]} for ${name}`);
      const shape = fields.slice(2).map((d) => parseInt(d, 10));
      const nbytes = numel(shape) * bytesPerElement(dtype);
      if (offset + nbytes > payload.length) {
        throw new Error(`truncated payload at parameter ${name}`);
      }
      entries.push({ name, dtype, shape, data: payload.subarray(offset, offset + nbytes) });
      offset += nbytes;
    } else {
      throw new Error(`unknown header line: ${line}`);
    }
  }
  if (formatVersion === null) throw new Error('missing version line');
  if (offset !== payload.length) {
    throw new Error(`${payload.length - offset} trailing payload bytes`);
  }
  return { entries, metadata, formatVersion };
}
