/**
 * Synthetic source checkpoints for tests and offline development: the
 * slim encoder/decoder architecture with seeded random weights, written
 * in the tfjs-style artifact layout the reader consumes.  Real released
 * checkpoints drop in the same way once downloaded.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import type { SourceConv } from './checkpoint.js';

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussian(rand: () => number): number {
  const u = Math.max(rand(), 1e-12);
  const v = rand();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
}

export const ENCODER_CONVS: SourceConv[] = [
  { name: 'vgg/conv1_1', filters: 16, kernelSize: 3, inChannels: 3 },
  { name: 'vgg/conv2_1', filters: 32, kernelSize: 3, inChannels: 16 },
  { name: 'vgg/conv3_1', filters: 48, kernelSize: 3, inChannels: 32 },
  { name: 'vgg/conv4_1', filters: 64, kernelSize: 3, inChannels: 48 },
];

export const DECODER_CONVS: SourceConv[] = [
  { name: 'dec/conv4', filters: 48, kernelSize: 3, inChannels: 64 },
  { name: 'dec/conv3', filters: 32, kernelSize: 3, inChannels: 48 },
  { name: 'dec/conv2', filters: 16, kernelSize: 3, inChannels: 32 },
  { name: 'dec/conv1', filters: 3, kernelSize: 3, inChannels: 16 },
];

export const DEFAULT_MAPPING: Record<string, string> = {
  'vgg/conv1_1': 'enc1_1',
  'vgg/conv2_1': 'enc2_1',
  'vgg/conv3_1': 'enc3_1',
  'vgg/conv4_1': 'enc4_1',
  'dec/conv4': 'dec4_1',
  'dec/conv3': 'dec3_1',
  'dec/conv2': 'dec2_1',
  'dec/conv1': 'dec1_1',
};

export function writeFixtureCheckpoint(
  dir: string,
  kind: 'encoder' | 'decoder',
  convs: SourceConv[],
  seed: number,
): string {
  fs.mkdirSync(dir, { recursive: true });
  const rand = mulberry32(seed);
  const weights: { name: string; shape: number[]; dtype: string }[] = [];
  const payloads: Buffer[] = [];
  for (const conv of convs) {
    const kShape = [conv.kernelSize, conv.kernelSize, conv.inChannels, conv.filters];
    const n = kShape.reduce((a, b) => a * b, 1);
    const std = Math.sqrt(2 / (conv.inChannels * conv.kernelSize * conv.kernelSize));
    const kernel = Buffer.alloc(4 * n);
    for (let i = 0; i < n; i++) kernel.writeFloatLE(gaussian(rand) * std, 4 * i);
    const bias = Buffer.alloc(4 * conv.filters);
    for (let i = 0; i < conv.filters; i++) bias.writeFloatLE(gaussian(rand) * 0.02, 4 * i);
    weights.push({ name: `${conv.name}/kernel`, shape: kShape, dtype: 'float32' });
    weights.push({ name: `${conv.name}/bias`, shape: [conv.filters], dtype: 'float32' });
    payloads.push(kernel, bias);
  }
  fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.concat(payloads));
  const doc = {
    format: 'layers-model',
    topology: { kind, convs },
    weightsManifest: [{ paths: ['weights.bin'], weights }],
  };
  const modelPath = path.join(dir, 'model.json');
  fs.writeFileSync(modelPath, JSON.stringify(doc, null, 1) + '\n');
  return modelPath;
}

export function writeFixturePair(root: string, seed = 42): {
  encoder: string;
  decoder: string;
} {
  return {
    encoder: writeFixtureCheckpoint(path.join(root, 'encoder'), 'encoder', ENCODER_CONVS, seed),
    decoder: writeFixtureCheckpoint(path.join(root, 'decoder'), 'decoder', DECODER_CONVS, seed + 1),
  };
}
