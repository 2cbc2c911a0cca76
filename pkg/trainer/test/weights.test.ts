import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { PredictorNet } from "../src/gru.js";
import { Rng } from "../src/rng.js";
import { exportWeights, importWeights } from "../src/weights.js";

function freshNet(seed: number): PredictorNet {
    const net = new PredictorNet({
        inputDim: 3, hiddenDim: 5, tiles: 12, inputLen: 4, horizon: 6, cutoff: 0.45,
    });
    net.init(new Rng(seed));
    return net;
}

describe("weight file round-trip", () => {
    it("is lossless at 64-bit precision", () => {
        const dir = mkdtempSync(join(tmpdir(), "grufov-"));
        const path = join(dir, "w.bin");
        const net = freshNet(2);
        exportWeights(net, path);
        const back = importWeights(path);
        expect(back.cfg).toEqual(net.cfg);
        const a = net.params();
        const b = back.params();
        expect(b.length).toBe(a.length);
        for (let i = 0; i < a.length; i++) {
            expect(Array.from(b[i])).toEqual(Array.from(a[i]));
        }
    });

    it("inference agrees after a round trip", () => {
        const dir = mkdtempSync(join(tmpdir(), "grufov-"));
        const path = join(dir, "w.bin");
        const net = freshNet(3);
        exportWeights(net, path);
        const back = importWeights(path);
        const rng = new Rng(4);
        for (let trial = 0; trial < 10; trial++) {
            const seq: Float64Array[] = [];
            for (let t = 0; t < net.cfg.inputLen; t++) {
                seq.push(new Float64Array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)]));
            }
            const pa = net.predict(seq);
            const pb = back.predict(seq);
            for (let n = 0; n < pa.length; n++) expect(pb[n]).toBe(pa[n]);
        }
    });

    it("rejects corrupted files", () => {
        const dir = mkdtempSync(join(tmpdir(), "grufov-"));
        const path = join(dir, "w.bin");
        const net = freshNet(5);
        exportWeights(net, path);
        const { readFileSync, writeFileSync } = require("node:fs") as typeof import("node:fs");
        const raw = readFileSync(path);
        writeFileSync(path, raw.subarray(0, raw.length - 8));
        expect(() => importWeights(path)).toThrow(/truncated/);
        writeFileSync(path, Buffer.concat([raw, Buffer.from([0])]));
        expect(() => importWeights(path)).toThrow(/trailing/);
        const bad = Buffer.from(raw);
        bad.write("NOPE", 0, "ascii");
        writeFileSync(path, bad);
        expect(() => importWeights(path)).toThrow(/magic/);
    });

    it("rejects non-finite weights on export", () => {
        const dir = mkdtempSync(join(tmpdir(), "grufov-"));
        const net = freshNet(6);
        net.wd[0] = Number.NaN;
        expect(() => exportWeights(net, join(dir, "w.bin"))).toThrow(/non-finite/);
    });
});
