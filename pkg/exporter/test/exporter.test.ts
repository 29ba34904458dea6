import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { readCheckpoint } from '../src/checkpoint.js';
import { readContainer } from '../src/container.js';
import { ExportError, exportCheckpoints, transposeKernel } from '../src/exporter.js';
import { DEFAULT_MAPPING, ENCODER_CONVS, DECODER_CONVS, writeFixturePair } from '../src/fixture.js';
import { validateChannelChain } from '../src/graph.js';

let root: string;
let fixture: { encoder: string; decoder: string };

beforeAll(() => {
  root = fs.mkdtempSync(path.join(os.tmpdir(), 'urst-export-test-'));
  fixture = writeFixturePair(path.join(root, 'src'), 42);
});

afterAll(() => {
  fs.rmSync(root, { recursive: true, force: true });
});

function doExport(suffix = '') {
  const weights = path.join(root, `out${suffix}.urstw`);
  const graph = path.join(root, `graph${suffix}.json`);
  const manifest = { ...fixture, mapping: DEFAULT_MAPPING };
  const res = exportCheckpoints(manifest, weights, graph);
  return { weights, graph, res };
}

describe('checkpoint export', () => {
  it('produces one kernel/bias pair per mapped conv with engine dims', () => {
    const { weights, res } = doExport('-a');
    const tensors = readContainer(fs.readFileSync(weights));
    expect(res.tensorCount).toBe(2 * (ENCODER_CONVS.length + DECODER_CONVS.length));
    const byName = new Map(tensors.map((t) => [t.name, t]));
    for (const conv of [...ENCODER_CONVS, ...DECODER_CONVS]) {
      const base = DEFAULT_MAPPING[conv.name];
      const kernel = byName.get(`${base}/kernel`)!;
      expect(kernel.dims).toEqual([conv.filters, conv.inChannels,
                                   conv.kernelSize, conv.kernelSize]);
      expect(byName.get(`${base}/bias`)!.dims).toEqual([conv.filters]);
    }
  });

  it('transposes one kernel element-for-element against the source', () => {
    const { weights } = doExport('-b');
    const exported = readContainer(fs.readFileSync(weights));
    const engineKernel = exported.find((t) => t.name === 'enc1_1/kernel')!;
    const src = readCheckpoint(fixture.encoder).tensors.get('vgg/conv1_1/kernel')!;
    const [kh, kw, inC, outC] = src.shape;
    for (let o = 0; o < outC; o++) {
      for (let c = 0; c < inC; c++) {
        for (let u = 0; u < kh; u++) {
          for (let v = 0; v < kw; v++) {
            const engineVal = engineKernel.data[((o * inC + c) * kh + u) * kw + v];
            const srcVal = src.data[((u * kw + v) * inC + c) * outC + o];
            expect(engineVal).toBe(srcVal);
          }
        }
      }
    }
  });

  it('transposeKernel maps layout indices exactly', () => {
    const data = new Float32Array(2 * 2 * 3 * 4);
    for (let i = 0; i < data.length; i++) data[i] = i;
    const t = transposeKernel([2, 2, 3, 4], data);
    expect(t.dims).toEqual([4, 3, 2, 2]);
    // element (o=1, c=2, u=0, v=1) came from source index ((0*2+1)*3+2)*4+1
    expect(t.data[((1 * 3 + 2) * 2 + 0) * 2 + 1]).toBe(((0 * 2 + 1) * 3 + 2) * 4 + 1);
  });

  it('is byte-deterministic across runs', () => {
    const a = doExport('-c');
    const b = doExport('-d');
    expect(fs.readFileSync(a.weights).equals(fs.readFileSync(b.weights))).toBe(true);
    expect(fs.readFileSync(a.graph).equals(fs.readFileSync(b.graph))).toBe(true);
  });

  it('emits a graph whose conv channel chain validates', () => {
    const { graph } = doExport('-e');
    const doc = JSON.parse(fs.readFileSync(graph, 'utf-8'));
    expect(() => validateChannelChain(doc.layers)).not.toThrow();
    const kinds = doc.layers.map((l: { kind: string }) => l.kind);
    expect(kinds.filter((k: string) => k === 'maxpool2')).toHaveLength(3);
    expect(kinds.filter((k: string) => k === 'upsample_nearest')).toHaveLength(3);
    const norm = doc.layers.find((l: { kind: string }) => l.kind === 'norm');
    expect(norm.variant).toBe('adain');
    const names = doc.layers.filter((l: { name?: string }) => l.name).map((l: { name: string }) => l.name);
    expect(names).toContain('relu4_1');
  });

  it('reports every unmapped source conv by name', () => {
    const mapping = { ...DEFAULT_MAPPING } as Record<string, string>;
    delete mapping['vgg/conv2_1'];
    const manifest = { ...fixture, mapping };
    expect(() => exportCheckpoints(manifest, path.join(root, 'x.urstw'),
                                   path.join(root, 'x.json')))
      .toThrow(/vgg\/conv2_1/);
  });

  it('rejects a kernel whose shape contradicts the topology', () => {
    const mangled = path.join(root, 'mangled');
    const pair = writeFixturePair(mangled, 1);
    const modelPath = pair.encoder;
    const doc = JSON.parse(fs.readFileSync(modelPath, 'utf-8'));
    doc.topology.convs[0].filters = 99;
    fs.writeFileSync(modelPath, JSON.stringify(doc));
    expect(() => exportCheckpoints(
      { encoder: pair.encoder, decoder: pair.decoder, mapping: DEFAULT_MAPPING },
      path.join(root, 'y.urstw'), path.join(root, 'y.json'),
    )).toThrow(ExportError);
  });

  it('verifies pinned shard hashes when provided', () => {
    const good = readCheckpoint(fixture.encoder).shardHashes['weights.bin'];
    const manifest = {
      ...fixture,
      mapping: DEFAULT_MAPPING,
      sha256: { 'weights.bin': good.replace(/^./, good[0] === '0' ? '1' : '0') },
    };
    expect(() => exportCheckpoints(manifest, path.join(root, 'z.urstw'),
                                   path.join(root, 'z.json')))
      .toThrow(/hash/);
  });
});
