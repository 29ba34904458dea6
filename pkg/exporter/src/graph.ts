/**
 * Engine graph emission.
 *
 * The engine consumes a flat JSON layer list.  The exporter rebuilds the
 * stylization topology around the converted weights: reflection-padded
 * 3x3 convs, probe-named relu layers and a maxpool after each encoder
 * block, the feature-transfer norm in the middle, and the mirrored
 * decoder with nearest upsampling between blocks.
 */

import type { SourceTopology } from './checkpoint.js';

export type EngineLayer = Record<string, unknown>;

export class GraphError extends Error {}

export function buildEngineGraph(
  encoder: SourceTopology,
  decoder: SourceTopology,
  engineNames: { encoder: string[]; decoder: string[] },
): { layers: EngineLayer[] } {
  const layers: EngineLayer[] = [];
  encoder.convs.forEach((conv, i) => {
    layers.push({ kind: 'pad_reflect', pad: Math.floor((conv.kernelSize - 1) / 2) });
    layers.push({
      kind: 'conv',
      in_channels: conv.inChannels,
      out_channels: conv.filters,
      kernel: conv.kernelSize,
      stride: 1,
      weight: engineNames.encoder[i],
    });
    layers.push({ kind: 'relu', name: `relu${i + 1}_1` });
    if (i < encoder.convs.length - 1) {
      layers.push({ kind: 'maxpool2' });
    }
  });
  layers.push({ kind: 'norm', variant: 'adain', affine: false, name: 'transfer' });
  decoder.convs.forEach((conv, i) => {
    layers.push({ kind: 'pad_reflect', pad: Math.floor((conv.kernelSize - 1) / 2) });
    layers.push({
      kind: 'conv',
      in_channels: conv.inChannels,
      out_channels: conv.filters,
      kernel: conv.kernelSize,
      stride: 1,
      weight: engineNames.decoder[i],
    });
    if (i < decoder.convs.length - 1) {
      layers.push({ kind: 'relu' });
      layers.push({ kind: 'upsample_nearest', factor: 2 });
    }
  });
  validateChannelChain(layers);
  return { layers };
}

export function validateChannelChain(layers: EngineLayer[]): void {
  let ch: number | null = null;
  layers.forEach((layer, i) => {
    if (layer.kind === 'conv') {
      const inCh = layer.in_channels as number;
      if (ch !== null && ch !== inCh) {
        throw new GraphError(`layer ${i}: conv expects ${inCh} channels, receives ${ch}`);
      }
      ch = layer.out_channels as number;
    }
  });
}

export function graphJson(graph: { layers: EngineLayer[] }): string {
  return JSON.stringify(graph, null, 1) + '\n';
}
