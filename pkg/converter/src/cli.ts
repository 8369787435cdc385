#!/usr/bin/env node
/**
 * Command line entry point.
 *
 *   expr1-convert convert <source.safetensors> <out.expr1> [options]
 *   expr1-convert inspect <path>
 *
 * Convert options:
 *   --map <file.json>           custom ConversionMap (renames + adaptations)
 *   --channel-adaptation <none|replicate_gray_to_rgb>
 *   --head-adaptation <keep|mark_for_reinit>
 *   --report <file.txt>         write the per-tensor conversion report
 */

import { readFileSync, writeFileSync } from 'node:fs';
import { parseArgs } from 'node:util';
import { parseSafetensors } from './safetensors.js';
import { serializeExpr1 } from './expr1.js';
import { convert, formatReport } from './convert.js';
import { defaultConversionMap, type ConversionMap } from './mapping.js';
import { inspect } from './inspect.js';

function loadMap(path: string | undefined): ConversionMap {
  const map = defaultConversionMap();
  if (path === undefined) return map;
  const user = JSON.parse(readFileSync(path, 'utf-8'));
  if (user.renames !== undefined) map.renames = user.renames;
  if (user.channelAdaptation !== undefined) map.channelAdaptation = user.channelAdaptation;
  if (user.headAdaptation !== undefined) map.headAdaptation = user.headAdaptation;
  return map;
}

function runConvert(argv: string[]): void {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      map: { type: 'string' },
      'channel-adaptation': { type: 'string' },
      'head-adaptation': { type: 'string' },
      report: { type: 'string' },
    },
  });
  if (positionals.length !== 2) {
    throw new Error('usage: expr1-convert convert <source.safetensors> <out.expr1> [options]');
  }
  const map = loadMap(values.map);
  const channel = values['channel-adaptation'];
  if (channel !== undefined) {
    if (channel !== 'none' && channel !== 'replicate_gray_to_rgb') {
      throw new Error(`unknown channel adaptation ${channel}`);
    }
    map.channelAdaptation = channel;
  }
  const head = values['head-adaptation'];
  if (head !== undefined) {
    if (head !== 'keep' && head !== 'mark_for_reinit') {
      throw new Error(`unknown head adaptation ${head}`);
    }
    map.headAdaptation = head;
  }
  const source = parseSafetensors(new Uint8Array(readFileSync(positionals[0])));
  const result = convert(source, map);
  writeFileSync(positionals[1], serializeExpr1(result.file));
  const report = formatReport(result.rows);
  if (values.report !== undefined) writeFileSync(values.report, report);
  process.stdout.write(report);
}

function runInspect(argv: string[]): void {
  if (argv.length !== 1) {
    throw new Error('usage: expr1-convert inspect <path>');
  }
  process.stdout.write(inspect(new Uint8Array(readFileSync(argv[0]))));
}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === 'convert') runConvert(rest);
    else if (command === 'inspect') runInspect(rest);
    else throw new Error('usage: expr1-convert <convert|inspect> ...');
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
