/**
 * Human-readable listings of EXPR1 checkpoints and safetensors files:
 * one line per tensor with name, dtype, shape, and payload checksum.
 */

import { createHash } from 'node:crypto';
import { parseExpr1 } from './expr1.js';
import { parseSafetensors } from './safetensors.js';

function sha256(data: Uint8Array): string {
  return createHash('sha256').update(data).digest('hex');
}

export function inspect(buf: Uint8Array): string {
  const lines: string[] = [];
  if (buf.length >= 6 && new TextDecoder().decode(buf.subarray(0, 6)) === 'EXPR1\n') {
    const file = parseExpr1(buf);
    lines.push(`format expr1 version ${file.formatVersion}`);
    for (const key of Object.keys(file.metadata).sort()) {
      lines.push(`meta ${key} ${file.metadata[key]}`);
    }
    for (const e of file.entries) {
      const dtype = e.dtype === 'F32' ? 'float32' : 'float64';
      lines.push(`param ${e.name} ${dtype} ${e.shape.join(' ')} sha256=${sha256(e.data)}`);
    }
  } else {
    let file;
    try {
      file = parseSafetensors(buf);
    } catch (err) {
      throw new Error(`unknown format: ${err instanceof Error ? err.message : String(err)}`);
    }
    lines.push('format safetensors');
    for (const key of Object.keys(file.metadata).sort()) {
      lines.push(`meta ${key} ${file.metadata[key]}`);
    }
    for (const t of file.tensors) {
      const dtype = t.dtype === 'F32' ? 'float32' : 'float64';
      lines.push(`param ${t.name} ${dtype} ${t.shape.join(' ')} sha256=${sha256(t.data)}`);
    }
  }
  return lines.join('\n') + '\n';
}
