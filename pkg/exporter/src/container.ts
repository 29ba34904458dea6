/**
 * The engine's binary weight container.
 *
 * Layout: magic "URSTW1", then u32-LE tensor count; per tensor a u16-LE
 * name length, UTF-8 name, u8 dtype (0 = float32), u8 ndim, ndim u32-LE
 * dims, then the raw little-endian float32 payload.  Writing iterates the
 * entry list in order, so output bytes are a pure function of the entries.
 */

const MAGIC = Buffer.from('URSTW1', 'ascii');

export interface NamedTensor {
  name: string;
  dims: number[];
  data: Float32Array;
}

export class ContainerError extends Error {}

function elementCount(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

export function writeContainer(tensors: NamedTensor[]): Buffer {
  const seen = new Set<string>();
  const parts: Buffer[] = [MAGIC];
  const count = Buffer.alloc(4);
  count.writeUInt32LE(tensors.length);
  parts.push(count);
  for (const t of tensors) {
    if (seen.has(t.name)) {
      throw new ContainerError(`duplicate tensor name ${t.name}`);
    }
    seen.add(t.name);
    if (elementCount(t.dims) !== t.data.length) {
      throw new ContainerError(
        `tensor ${t.name}: dims ${t.dims} do not match ${t.data.length} values`);
    }
    const name = Buffer.from(t.name, 'utf-8');
    const head = Buffer.alloc(2 + name.length + 2 + 4 * t.dims.length);
    head.writeUInt16LE(name.length, 0);
    name.copy(head, 2);
    head.writeUInt8(0, 2 + name.length);
    head.writeUInt8(t.dims.length, 3 + name.length);
    t.dims.forEach((d, i) => head.writeUInt32LE(d, 4 + name.length + 4 * i));
    const payload = Buffer.alloc(4 * t.data.length);
    for (let i = 0; i < t.data.length; i++) {
      payload.writeFloatLE(t.data[i], 4 * i);
    }
    parts.push(head, payload);
  }
  return Buffer.concat(parts);
}

export function readContainer(buf: Buffer): NamedTensor[] {
  if (buf.length < MAGIC.length + 4 || !buf.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new ContainerError('bad magic: not a URSTW1 container');
  }
  let off = MAGIC.length;
  const need = (n: number) => {
    if (off + n > buf.length) throw new ContainerError('truncated container');
    off += n;
    return off - n;
  };
  const count = buf.readUInt32LE(need(4));
  const out: NamedTensor[] = [];
  const seen = new Set<string>();
  for (let i = 0; i < count; i++) {
    const nameLen = buf.readUInt16LE(need(2));
    const name = buf.subarray(need(nameLen), off).toString('utf-8');
    const dtype = buf.readUInt8(need(1));
    if (dtype !== 0) throw new ContainerError(`tensor ${name}: unsupported dtype ${dtype}`);
    const ndim = buf.readUInt8(need(1));
    const dims: number[] = [];
    for (let d = 0; d < ndim; d++) dims.push(buf.readUInt32LE(need(4)));
    const n = elementCount(dims);
    const start = need(4 * n);
    const data = new Float32Array(n);
    for (let v = 0; v < n; v++) data[v] = buf.readFloatLE(start + 4 * v);
    if (seen.has(name)) throw new ContainerError(`duplicate tensor name ${name}`);
    seen.add(name);
    out.push({ name, dims, data });
  }
  if (off !== buf.length) throw new ContainerError('trailing bytes after final tensor');
  return out;
}
