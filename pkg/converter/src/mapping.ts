/**
 * Name mapping between torch-style ResNet-18 state dicts and EXPR1 dotted
 * names, plus the canonical EXPR1 entry order (parameters first in model
 * traversal order, then batchnorm running statistics).
 */

export interface ConversionMap {
  /** source tensor name -> EXPR1 name; names absent here are dropped. */
  renames: Record<string, string>;
  channelAdaptation: 'none' | 'replicate_gray_to_rgb';
  headAdaptation: 'keep' | 'mark_for_reinit';
}

const BN_PAIRS: Array<[string, string]> = [
  ['weight', 'gamma'],
  ['bias', 'beta'],
  ['running_mean', 'running_mean'],
  ['running_var', 'running_var'],
];

/** Default mapping for torchvision-style ResNet-18 state dict names. */
export function torchResnet18Renames(): Record<string, string> {
  const renames: Record<string, string> = {
    'conv1.weight': 'stem.conv.weight',
    'fc.weight': 'head.weight',
    'fc.bias': 'head.bias',
  };
  for (const [src, dst] of BN_PAIRS) renames[`bn1.${src}`] = `stem.bn.${dst}`;
  for (let stage = 1; stage <= 4; stage++) {
    for (let block = 0; block < 2; block++) {
      const s = `layer${stage}.${block}`;
      const d = `stage${stage}.block${block + 1}`;
      for (const bn of ['bn1', 'bn2']) {
        for (const [src, dst] of BN_PAIRS) renames[`${s}.${bn}.${src}`] = `${d}.${bn}.${dst}`;
      }
      renames[`${s}.conv1.weight`] = `${d}.conv1.weight`;
      renames[`${s}.conv2.weight`] = `${d}.conv2.weight`;
      if (stage > 1 && block === 0) {
        renames[`${s}.downsample.0.weight`] = `${d}.down.conv.weight`;
        for (const [src, dst] of BN_PAIRS) {
          renames[`${s}.downsample.1.${src}`] = `${d}.down.bn.${dst}`;
        }
      }
    }
  }
  return renames;
}

export function defaultConversionMap(): ConversionMap {
  return {
    renames: torchResnet18Renames(),
    channelAdaptation: 'none',
    headAdaptation: 'mark_for_reinit',
  };
}

function blockNames(stage: number, block: number): { params: string[]; buffers: string[] } {
  const p = `stage${stage}.block${block}`;
  const hasDown = stage > 1 && block === 1;
  const params = [
    `${p}.conv1.weight`, `${p}.bn1.gamma`, `${p}.bn1.beta`,
    `${p}.conv2.weight`, `${p}.bn2.gamma`, `${p}.bn2.beta`,
  ];
  const buffers = [
    `${p}.bn1.running_mean`, `${p}.bn1.running_var`,
    `${p}.bn2.running_mean`, `${p}.bn2.running_var`,
  ];
  if (hasDown) {
    params.push(`${p}.down.conv.weight`, `${p}.down.bn.gamma`, `${p}.down.bn.beta`);
    buffers.push(`${p}.down.bn.running_mean`, `${p}.down.bn.running_var`);
  }
  return { params, buffers };
}

/** EXPR1 entry order matching the training library's checkpoint writer. */
export function canonicalEntryOrder(): string[] {
  const params = ['stem.conv.weight', 'stem.bn.gamma', 'stem.bn.beta'];
  const buffers = ['stem.bn.running_mean', 'stem.bn.running_var'];
  for (let stage = 1; stage <= 4; stage++) {
    for (let block = 1; block <= 2; block++) {
      const names = blockNames(stage, block);
      params.push(...names.params);
      buffers.push(...names.buffers);
    }
  }
  params.push('head.weight', 'head.bias');
  return [...params, ...buffers];
}

export function trunkNames(): string[] {
  return canonicalEntryOrder().filter((n) => !n.startsWith('head.'));
}
