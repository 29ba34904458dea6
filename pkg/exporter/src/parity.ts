/**
 * Cross-stack parity: run the encoder forward in the source ecosystem
 * (tfjs, NHWC, mirror padding) and in the engine (via its CLI feature
 * dump), then compare activations at the deepest probe layer.  The check
 * is skipped with a notice when the engine binary is not on PATH.
 */

import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { spawnSync } from 'node:child_process';

import * as tf from '@tensorflow/tfjs';

import { Checkpoint, readCheckpoint } from './checkpoint.js';
import { readContainer } from './container.js';
import { mulberry32 } from './fixture.js';
import { encodePng } from './png.js';

export interface ParityReport {
  skipped: boolean;
  notice?: string;
  maxAbsDiff?: number;
  probeLayer?: string;
  shape?: number[];
}

export function testImage(size = 256, seed = 7): Uint8Array {
  const rand = mulberry32(seed);
  const img = new Uint8Array(size * size * 3);
  // smooth multi-scale pattern: sinusoids plus mild noise
  const a1 = rand() * Math.PI;
  const a2 = rand() * Math.PI;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const s1 = Math.sin((2 * Math.PI * (x * Math.cos(a1) + y * Math.sin(a1))) / 53.0);
      const s2 = Math.sin((2 * Math.PI * (x * Math.cos(a2) + y * Math.sin(a2))) / 17.0);
      for (let c = 0; c < 3; c++) {
        const v = 0.5 + 0.25 * s1 + 0.15 * s2 * (1 - 0.2 * c) + 0.05 * (rand() - 0.5);
        img[(y * size + x) * 3 + c] = Math.round(Math.min(Math.max(v, 0), 1) * 255);
      }
    }
  }
  return img;
}

/** Encoder forward in the source stack: pad-reflect, conv, relu, pool. */
export function sourceEncoderForward(ckpt: Checkpoint, image: Uint8Array,
                                     size: number): tf.Tensor4D {
  return tf.tidy(() => {
    const pixels = new Float32Array(size * size * 3);
    for (let i = 0; i < pixels.length; i++) pixels[i] = image[i] / 255;
    let x: tf.Tensor4D = tf.tensor4d(pixels, [1, size, size, 3]);
    ckpt.topology.convs.forEach((conv, i) => {
      const kernel = ckpt.tensors.get(`${conv.name}/kernel`)!;
      const bias = ckpt.tensors.get(`${conv.name}/bias`)!;
      const k = tf.tensor4d(kernel.data, kernel.shape as [number, number, number, number]);
      const b = tf.tensor1d(bias.data);
      const p = Math.floor((conv.kernelSize - 1) / 2);
      x = tf.mirrorPad(x, [[0, 0], [p, p], [p, p], [0, 0]], 'reflect');
      x = tf.relu<tf.Tensor4D>(tf.conv2d(x, k as tf.Tensor4D, 1, 'valid').add(b) as tf.Tensor4D);
      if (i < ckpt.topology.convs.length - 1) {
        x = tf.maxPool(x, 2, 2, 'valid');
      }
    });
    return x;
  });
}

function engineCommand(): string[] | null {
  const explicit = process.env.TINSTITCH_CLI;
  if (explicit) return explicit.split(' ');
  for (const candidate of [['tinstitch'], ['python3', '-m', 'tinstitch.cli']]) {
    const probe = spawnSync(candidate[0], [...candidate.slice(1), '--help'],
                            { stdio: 'ignore' });
    if (probe.status === 0) return candidate;
  }
  return null;
}

export function parityCheck(
  encoderModelJson: string,
  exportedWeights: string,
  exportedGraph: string,
  probeLayer = 'relu4_1',
): ParityReport {
  const engine = engineCommand();
  if (!engine) {
    return { skipped: true, notice: 'engine CLI not found; parity check skipped' };
  }
  const ckpt = readCheckpoint(encoderModelJson);
  const size = 256;
  const image = testImage(size);

  const work = fs.mkdtempSync(path.join(os.tmpdir(), 'urst-parity-'));
  try {
    const imagePath = path.join(work, 'probe.png');
    fs.writeFileSync(imagePath, encodePng(size, size, image));
    const featsPath = path.join(work, 'features.urstw');
    const run = spawnSync(engine[0], [...engine.slice(1), 'dump-features',
      '--image', imagePath, '--graph', exportedGraph, '--weights', exportedWeights,
      '--layer', probeLayer, '--out', featsPath], { encoding: 'utf-8' });
    if (run.status !== 0) {
      throw new Error(`engine dump-features failed: ${run.stderr || run.stdout}`);
    }
    const engineTensors = readContainer(fs.readFileSync(featsPath));
    const engineFeat = engineTensors.find((t) => t.name === `features/${probeLayer}`);
    if (!engineFeat) throw new Error('engine feature tensor missing from dump');

    const srcT = sourceEncoderForward(ckpt, image, size);
    const srcData = srcT.dataSync() as Float32Array; // NHWC
    const [, sh, sw, sc] = srcT.shape;
    srcT.dispose();
    const [, ec, eh, ew] = engineFeat.dims; // NCHW
    if (sh !== eh || sw !== ew || sc !== ec) {
      throw new Error(`feature shapes differ: source ${[sh, sw, sc]} vs engine ${[eh, ew, ec]}`);
    }
    let maxDiff = 0;
    for (let c = 0; c < ec; c++) {
      for (let y = 0; y < eh; y++) {
        for (let x = 0; x < ew; x++) {
          const a = engineFeat.data[(c * eh + y) * ew + x];
          const b = srcData[(y * sw + x) * sc + c];
          const d = Math.abs(a - b);
          if (d > maxDiff) maxDiff = d;
        }
      }
    }
    return { skipped: false, maxAbsDiff: maxDiff, probeLayer, shape: [ec, eh, ew] };
  } finally {
    fs.rmSync(work, { recursive: true, force: true });
  }
}
