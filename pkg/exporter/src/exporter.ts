/**
 * Checkpoint conversion: reads the encoder/decoder source checkpoints,
 * transposes every kernel from the source [kH, kW, in, out] layout to the
 * engine's [out, in, kH, kW], and writes the URSTW1 container plus the
 * matching graph JSON.  Output is deterministic: same checkpoints and
 * manifest give byte-identical files.
 */

import * as fs from 'node:fs';

import { Checkpoint, CheckpointError, readCheckpoint } from './checkpoint.js';
import { NamedTensor, writeContainer } from './container.js';
import { buildEngineGraph, graphJson } from './graph.js';

export interface ExportManifest {
  encoder: string;
  decoder: string;
  /** source conv name -> engine weight base name */
  mapping: Record<string, string>;
  /** optional pinned shard hashes, verified when present */
  sha256?: Record<string, string>;
}

export class ExportError extends Error {}

export function transposeKernel(shape: number[], data: Float32Array): {
  dims: number[];
  data: Float32Array;
} {
  const [kh, kw, inC, outC] = shape;
  const out = new Float32Array(data.length);
  for (let o = 0; o < outC; o++) {
    for (let c = 0; c < inC; c++) {
      for (let u = 0; u < kh; u++) {
        for (let v = 0; v < kw; v++) {
          out[((o * inC + c) * kh + u) * kw + v] =
            data[((u * kw + v) * inC + c) * outC + o];
        }
      }
    }
  }
  return { dims: [outC, inC, kh, kw], data: out };
}

function convertConvs(ckpt: Checkpoint, mapping: Record<string, string>): {
  tensors: NamedTensor[];
  engineNames: string[];
} {
  const tensors: NamedTensor[] = [];
  const engineNames: string[] = [];
  const missing: string[] = [];
  for (const conv of ckpt.topology.convs) {
    const engineName = mapping[conv.name];
    if (!engineName) {
      missing.push(conv.name);
      continue;
    }
    engineNames.push(engineName);
    const kernel = ckpt.tensors.get(`${conv.name}/kernel`);
    const bias = ckpt.tensors.get(`${conv.name}/bias`);
    if (!kernel || !bias) {
      throw new ExportError(`source tensors for ${conv.name} not found in checkpoint`);
    }
    const [kh, kw, inC, outC] = kernel.shape;
    if (kh !== conv.kernelSize || inC !== conv.inChannels || outC !== conv.filters) {
      throw new ExportError(
        `${conv.name}: kernel shape [${kernel.shape}] does not match topology ` +
        `(k=${conv.kernelSize}, in=${conv.inChannels}, out=${conv.filters})`);
    }
    const t = transposeKernel(kernel.shape, kernel.data);
    tensors.push({ name: `${engineName}/kernel`, dims: t.dims, data: t.data });
    tensors.push({ name: `${engineName}/bias`, dims: [...bias.shape], data: bias.data });
  }
  if (missing.length) {
    throw new ExportError(`manifest mapping is missing entries for: ${missing.join(', ')}`);
  }
  return { tensors, engineNames };
}

function verifyHashes(manifest: ExportManifest, ckpts: Checkpoint[]): void {
  if (!manifest.sha256) return;
  const seen: Record<string, string> = {};
  for (const c of ckpts) Object.assign(seen, c.shardHashes);
  for (const [file, expect] of Object.entries(manifest.sha256)) {
    const got = seen[file];
    if (got && got !== expect) {
      throw new ExportError(`shard ${file} hash ${got} does not match pinned ${expect}`);
    }
  }
}

export function exportCheckpoints(
  manifest: ExportManifest,
  outWeights: string,
  outGraph: string,
): { tensorCount: number } {
  const enc = readCheckpoint(manifest.encoder);
  const dec = readCheckpoint(manifest.decoder);
  if (enc.topology.kind !== 'encoder' || dec.topology.kind !== 'decoder') {
    throw new CheckpointError('checkpoint roles are swapped or unlabeled');
  }
  verifyHashes(manifest, [enc, dec]);
  const encPart = convertConvs(enc, manifest.mapping);
  const decPart = convertConvs(dec, manifest.mapping);
  const graph = buildEngineGraph(enc.topology, dec.topology, {
    encoder: encPart.engineNames,
    decoder: decPart.engineNames,
  });
  const tensors = [...encPart.tensors, ...decPart.tensors];
  fs.writeFileSync(outWeights, writeContainer(tensors));
  fs.writeFileSync(outGraph, graphJson(graph));
  return { tensorCount: tensors.length };
}

export function loadManifest(path: string): ExportManifest {
  const doc = JSON.parse(fs.readFileSync(path, 'utf-8'));
  for (const key of ['encoder', 'decoder', 'mapping']) {
    if (!(key in doc)) throw new ExportError(`manifest missing ${key}`);
  }
  return doc;
}
