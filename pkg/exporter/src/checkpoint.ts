/**
 * Source-checkpoint reading: TensorFlow.js layers artifacts, i.e. a
 * model.json whose weightsManifest lists named float32 tensors stored in
 * binary shard files next to it.  Kernels follow the tfjs convolution
 * layout [kH, kW, inChannels, outChannels].
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import { createHash } from 'node:crypto';

export interface SourceConv {
  name: string;
  filters: number;
  kernelSize: number;
  inChannels: number;
}

export interface SourceTopology {
  kind: 'encoder' | 'decoder';
  convs: SourceConv[];
}

export interface Checkpoint {
  topology: SourceTopology;
  tensors: Map<string, { shape: number[]; data: Float32Array }>;
  shardHashes: Record<string, string>;
}

export class CheckpointError extends Error {}

interface WeightEntry {
  name: string;
  shape: number[];
  dtype: string;
}

interface ManifestGroup {
  paths: string[];
  weights: WeightEntry[];
}

export function readCheckpoint(modelJsonPath: string): Checkpoint {
  const dir = path.dirname(modelJsonPath);
  const doc = JSON.parse(fs.readFileSync(modelJsonPath, 'utf-8'));
  if (!doc.topology || !Array.isArray(doc.topology.convs)) {
    throw new CheckpointError(`${modelJsonPath}: missing topology.convs`);
  }
  const groups: ManifestGroup[] = doc.weightsManifest;
  if (!Array.isArray(groups)) {
    throw new CheckpointError(`${modelJsonPath}: missing weightsManifest`);
  }
  const tensors = new Map<string, { shape: number[]; data: Float32Array }>();
  const shardHashes: Record<string, string> = {};
  for (const group of groups) {
    const buffers = group.paths.map((p) => {
      const raw = fs.readFileSync(path.join(dir, p));
      shardHashes[p] = createHash('sha256').update(raw).digest('hex');
      return raw;
    });
    const blob = Buffer.concat(buffers);
    let off = 0;
    for (const entry of group.weights) {
      if (entry.dtype !== 'float32') {
        throw new CheckpointError(`${entry.name}: dtype ${entry.dtype} unsupported`);
      }
      const n = entry.shape.reduce((a, b) => a * b, 1);
      if (off + 4 * n > blob.length) {
        throw new CheckpointError(`${entry.name}: shard data truncated`);
      }
      const data = new Float32Array(n);
      for (let i = 0; i < n; i++) data[i] = blob.readFloatLE(off + 4 * i);
      off += 4 * n;
      tensors.set(entry.name, { shape: entry.shape, data });
    }
    if (off !== blob.length) {
      throw new CheckpointError('shard bytes left over after weightsManifest entries');
    }
  }
  return { topology: doc.topology, tensors, shardHashes };
}
