import { describe, expect, it } from "vitest";

import { Adam, PredictorNet, sigmoid, softplus } from "../src/gru.js";
import { Rng } from "../src/rng.js";

function tinyNet(seed = 7): PredictorNet {
    const net = new PredictorNet({
        inputDim: 3,
        hiddenDim: 4,
        tiles: 8,
        inputLen: 3,
        horizon: 2,
        cutoff: 0.5,
    });
    net.init(new Rng(seed));
    return net;
}

function randomSample(rng: Rng, net: PredictorNet) {
    const seq: Float64Array[] = [];
    for (let t = 0; t < net.cfg.inputLen; t++) {
        seq.push(new Float64Array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)]));
    }
    const labels = new Float64Array(net.cfg.tiles);
    for (let n = 0; n < labels.length; n++) labels[n] = rng.next() < 0.4 ? 1 : 0;
    return { seq, labels };
}

function lossOf(net: PredictorNet, seq: Float64Array[], labels: Float64Array): number {
    const { z } = net.logitsRaw(seq);
    let loss = 0;
    for (let n = 0; n < z.length; n++) loss += softplus(z[n]) - labels[n] * z[n];
    return loss / z.length;
}

describe("forward pass", () => {
    it("zero weights put every probability at one half", () => {
        const net = new PredictorNet({
            inputDim: 3, hiddenDim: 4, tiles: 8, inputLen: 3, horizon: 2, cutoff: 0.5,
        });
        const seq = [new Float64Array(3), new Float64Array(3), new Float64Array(3)];
        const p = net.predict(seq);
        for (const v of p) expect(v).toBeCloseTo(0.5, 12);
    });

    it("probabilities stay strictly inside (0,1)", () => {
        const net = tinyNet();
        const rng = new Rng(1);
        for (let i = 0; i < 20; i++) {
            const { seq } = randomSample(rng, net);
            for (const v of net.predict(seq)) {
                expect(v).toBeGreaterThan(0);
                expect(v).toBeLessThan(1);
            }
        }
    });

    it("rejects wrong sequence lengths", () => {
        const net = tinyNet();
        expect(() => net.predict([new Float64Array(3)])).toThrow(/length/);
    });

    it("sigmoid/softplus agree with definitions", () => {
        expect(sigmoid(0)).toBe(0.5);
        expect(softplus(0)).toBeCloseTo(Math.log(2), 14);
        expect(softplus(100)).toBeCloseTo(100, 10);
        expect(softplus(-100)).toBeCloseTo(Math.exp(-100), 20);
    });
});

describe("backpropagation through time", () => {
    it("analytic gradients match central finite differences to 1e-4", () => {
        const net = tinyNet(11);
        const rng = new Rng(3);
        const { seq, labels } = randomSample(rng, net);

        net.zeroGrads();
        net.lossAndGrad(seq, labels);
        const analytic = net.grads().map((g) => Float64Array.from(g));
        const params = net.params();

        const eps = 1e-6;
        let num = 0;
        let den = 0;
        let worst = 0;
        for (let pi = 0; pi < params.length; pi++) {
            const p = params[pi];
            for (let k = 0; k < p.length; k++) {
                const orig = p[k];
                p[k] = orig + eps;
                const up = lossOf(net, seq, labels);
                p[k] = orig - eps;
                const down = lossOf(net, seq, labels);
                p[k] = orig;
                const fd = (up - down) / (2 * eps);
                const ana = analytic[pi][k];
                num += (ana - fd) * (ana - fd);
                den += ana * ana + fd * fd;
                const rel = Math.abs(ana - fd) / Math.max(Math.abs(ana) + Math.abs(fd), 1e-4);
                worst = Math.max(worst, rel);
            }
        }
        const overall = Math.sqrt(num) / Math.max(Math.sqrt(den), 1e-12);
        expect(overall).toBeLessThan(1e-4);
        expect(worst).toBeLessThan(1e-3);
    });

    it("gradients accumulate across samples", () => {
        const net = tinyNet(13);
        const rng = new Rng(5);
        const a = randomSample(rng, net);
        const b = randomSample(rng, net);
        net.zeroGrads();
        net.lossAndGrad(a.seq, a.labels);
        const gA = net.grads().map((g) => Float64Array.from(g));
        net.zeroGrads();
        net.lossAndGrad(b.seq, b.labels);
        const gB = net.grads().map((g) => Float64Array.from(g));
        net.zeroGrads();
        net.lossAndGrad(a.seq, a.labels);
        net.lossAndGrad(b.seq, b.labels);
        const gBoth = net.grads();
        for (let i = 0; i < gBoth.length; i++) {
            for (let k = 0; k < gBoth[i].length; k++) {
                expect(gBoth[i][k]).toBeCloseTo(gA[i][k] + gB[i][k], 10);
            }
        }
    });
});

describe("adam", () => {
    it("moves parameters against the gradient", () => {
        const p = new Float64Array([1.0]);
        const g = new Float64Array([0.5]);
        const adam = new Adam([p], [g], 0.1);
        adam.step();
        expect(p[0]).toBeLessThan(1.0);
    });
});
