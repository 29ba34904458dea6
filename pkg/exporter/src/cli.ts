#!/usr/bin/env node
/** Exporter command line: convert checkpoints, run parity, build fixtures. */

import * as fs from 'node:fs';
import * as path from 'node:path';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { exportCheckpoints, loadManifest } from './exporter.js';
import { DEFAULT_MAPPING, writeFixturePair } from './fixture.js';
import { parityCheck } from './parity.js';

await yargs(hideBin(process.argv))
  .command(
    'export',
    'convert source checkpoints to the engine container + graph',
    (y) => y
      .option('manifest', { type: 'string', describe: 'manifest JSON path' })
      .option('encoder', { type: 'string' })
      .option('decoder', { type: 'string' })
      .option('out-weights', { type: 'string', demandOption: true })
      .option('out-graph', { type: 'string', demandOption: true }),
    (args) => {
      const manifest = args.manifest
        ? loadManifest(args.manifest)
        : { encoder: args.encoder!, decoder: args.decoder!, mapping: DEFAULT_MAPPING };
      if (!manifest.encoder || !manifest.decoder) {
        throw new Error('provide --manifest or both --encoder and --decoder');
      }
      const res = exportCheckpoints(manifest, args.outWeights as string,
                                    args.outGraph as string);
      console.log(`exported ${res.tensorCount} tensors -> ${args.outWeights}, ` +
                  `graph -> ${args.outGraph}`);
    },
  )
  .command(
    'parity',
    'compare source-stack and engine encoder activations',
    (y) => y
      .option('encoder', { type: 'string', demandOption: true })
      .option('weights', { type: 'string', demandOption: true })
      .option('graph', { type: 'string', demandOption: true })
      .option('layer', { type: 'string', default: 'relu4_1' })
      .option('tolerance', { type: 'number', default: 1e-3 }),
    (args) => {
      const report = parityCheck(args.encoder, args.weights, args.graph, args.layer);
      if (report.skipped) {
        console.log(`SKIPPED: ${report.notice}`);
        return;
      }
      console.log(`max |diff| at ${report.probeLayer} ` +
                  `(${report.shape!.join('x')}): ${report.maxAbsDiff!.toExponential(3)}`);
      if (report.maxAbsDiff! > args.tolerance) {
        console.error(`parity FAILED: exceeds tolerance ${args.tolerance}`);
        process.exitCode = 1;
      } else {
        console.log('parity OK');
      }
    },
  )
  .command(
    'make-fixture',
    'write a synthetic source checkpoint pair for offline testing',
    (y) => y
      .option('dir', { type: 'string', demandOption: true })
      .option('seed', { type: 'number', default: 42 }),
    (args) => {
      const paths = writeFixturePair(args.dir, args.seed);
      const manifest = {
        encoder: paths.encoder,
        decoder: paths.decoder,
        mapping: DEFAULT_MAPPING,
      };
      const manifestPath = path.join(args.dir, 'manifest.json');
      fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 1) + '\n');
      console.log(`fixture checkpoints + manifest written under ${args.dir}`);
    },
  )
  .demandCommand(1)
  .strict()
  .parse();
