/**
 * "GRUFOV1" binary weight format: 8-byte magic, a little-endian header
 * (u32 layer count, u32 input dim, u32 hidden dim, u32 tiles, u32 input
 * length, u32 horizon, f64 cutoff), then row-major float64 matrices in the
 * fixed order update/reset/candidate (W, Z, b) per layer, then the dense
 * head (W, b).
 */
import { readFileSync, writeFileSync } from "node:fs";

import { GruLayer, NetConfig, PredictorNet } from "./gru.js";

export const MAGIC = "GRUFOV1\n";
const HEADER_BYTES = MAGIC.length + 6 * 4 + 8;

export function exportWeights(net: PredictorNet, path: string): void {
    const layers = [net.l1, net.l2];
    let floats = 0;
    for (const l of layers) for (const p of l.params()) floats += p.length;
    floats += net.wd.length + net.bd.length;
    const buf = Buffer.alloc(HEADER_BYTES + floats * 8);
    buf.write(MAGIC, 0, "ascii");
    let off = MAGIC.length;
    for (const v of [
        layers.length,
        net.cfg.inputDim,
        net.cfg.hiddenDim,
        net.cfg.tiles,
        net.cfg.inputLen,
        net.cfg.horizon,
    ]) {
        buf.writeUInt32LE(v, off);
        off += 4;
    }
    buf.writeDoubleLE(net.cfg.cutoff, off);
    off += 8;
    const blocks: Float64Array[] = [];
    for (const l of layers) blocks.push(...l.params());
    blocks.push(net.wd, net.bd);
    for (const block of blocks) {
        for (let i = 0; i < block.length; i++) {
            if (!Number.isFinite(block[i])) throw new Error("non-finite weight value");
            buf.writeDoubleLE(block[i], off);
            off += 8;
        }
    }
    writeFileSync(path, buf);
}

export function importWeights(path: string): PredictorNet {
    const buf = readFileSync(path);
    if (buf.length < HEADER_BYTES || buf.toString("ascii", 0, MAGIC.length) !== MAGIC) {
        throw new Error("bad magic string");
    }
    let off = MAGIC.length;
    const layers = buf.readUInt32LE(off); off += 4;
    const inputDim = buf.readUInt32LE(off); off += 4;
    const hiddenDim = buf.readUInt32LE(off); off += 4;
    const tiles = buf.readUInt32LE(off); off += 4;
    const inputLen = buf.readUInt32LE(off); off += 4;
    const horizon = buf.readUInt32LE(off); off += 4;
    const cutoff = buf.readDoubleLE(off); off += 8;
    if (layers !== 2) throw new Error(`expected 2 recurrent layers, got ${layers}`);
    const cfg: NetConfig = { inputDim, hiddenDim, tiles, inputLen, horizon, cutoff };
    const net = new PredictorNet(cfg);

    const read = (target: Float64Array) => {
        if (off + target.length * 8 > buf.length) throw new Error("weight file truncated");
        for (let i = 0; i < target.length; i++) {
            target[i] = buf.readDoubleLE(off);
            off += 8;
        }
    };
    for (const layer of [net.l1, net.l2] as GruLayer[]) {
        for (const p of layer.params()) read(p);
    }
    read(net.wd);
    read(net.bd);
    if (off !== buf.length) throw new Error("trailing bytes after weight payload");
    return net;
}
