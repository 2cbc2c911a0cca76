/**
 * Two-layer gated-recurrent network with a dense sigmoid head, trained by
 * backpropagation through time. Flat Float64Array math throughout: float64
 * everywhere so exported weights reproduce the simulator's inference bit
 * for bit (within rounding of reordered sums).
 */
import { Rng } from "./rng.js";

export function sigmoid(z: number): number {
    return 1 / (1 + Math.exp(-z));
}

/** log(1 + e^z) without overflow. */
export function softplus(z: number): number {
    return z > 30 ? z : z < -30 ? Math.exp(z) : Math.log1p(Math.exp(z));
}

function matvec(w: Float64Array, x: Float64Array, out: Float64Array, rows: number, cols: number, add = false): void {
    for (let j = 0; j < rows; j++) {
        let sum = add ? out[j] : 0;
        const base = j * cols;
        for (let k = 0; k < cols; k++) sum += w[base + k] * x[k];
        out[j] = sum;
    }
}

/** out[k] += sum_j w[j,k] * v[j] */
function matvecT(w: Float64Array, v: Float64Array, out: Float64Array, rows: number, cols: number): void {
    for (let j = 0; j < rows; j++) {
        const vj = v[j];
        if (vj === 0) continue;
        const base = j * cols;
        for (let k = 0; k < cols; k++) out[k] += w[base + k] * vj;
    }
}

/** g[j,k] += v[j] * x[k] */
function outerAdd(g: Float64Array, v: Float64Array, x: Float64Array, rows: number, cols: number): void {
    for (let j = 0; j < rows; j++) {
        const vj = v[j];
        if (vj === 0) continue;
        const base = j * cols;
        for (let k = 0; k < cols; k++) g[base + k] += vj * x[k];
    }
}

/** One recurrent layer's parameters and gradient buffers. */
export class GruLayer {
    readonly inputDim: number;
    readonly hiddenDim: number;
    // update gate, reset gate, candidate state
    wu: Float64Array; zu: Float64Array; bu: Float64Array;
    wr: Float64Array; zr: Float64Array; br: Float64Array;
    wc: Float64Array; zc: Float64Array; bc: Float64Array;
    gwu: Float64Array; gzu: Float64Array; gbu: Float64Array;
    gwr: Float64Array; gzr: Float64Array; gbr: Float64Array;
    gwc: Float64Array; gzc: Float64Array; gbc: Float64Array;

    constructor(inputDim: number, hiddenDim: number) {
        this.inputDim = inputDim;
        this.hiddenDim = hiddenDim;
        const wi = hiddenDim * inputDim;
        const wh = hiddenDim * hiddenDim;
        this.wu = new Float64Array(wi); this.zu = new Float64Array(wh); this.bu = new Float64Array(hiddenDim);
        this.wr = new Float64Array(wi); this.zr = new Float64Array(wh); this.br = new Float64Array(hiddenDim);
        this.wc = new Float64Array(wi); this.zc = new Float64Array(wh); this.bc = new Float64Array(hiddenDim);
        this.gwu = new Float64Array(wi); this.gzu = new Float64Array(wh); this.gbu = new Float64Array(hiddenDim);
        this.gwr = new Float64Array(wi); this.gzr = new Float64Array(wh); this.gbr = new Float64Array(hiddenDim);
        this.gwc = new Float64Array(wi); this.gzc = new Float64Array(wh); this.gbc = new Float64Array(hiddenDim);
    }

    init(rng: Rng): void {
        const scaleIn = 1 / Math.sqrt(this.inputDim);
        const scaleHid = 1 / Math.sqrt(this.hiddenDim);
        for (const [arr, scale] of [
            [this.wu, scaleIn], [this.wr, scaleIn], [this.wc, scaleIn],
            [this.zu, scaleHid], [this.zr, scaleHid], [this.zc, scaleHid],
        ] as [Float64Array, number][]) {
            for (let i = 0; i < arr.length; i++) arr[i] = rng.uniform(-scale, scale);
        }
        // biases start at zero
    }

    params(): Float64Array[] {
        return [this.wu, this.zu, this.bu, this.wr, this.zr, this.br, this.wc, this.zc, this.bc];
    }

    grads(): Float64Array[] {
        return [this.gwu, this.gzu, this.gbu, this.gwr, this.gzr, this.gbr, this.gwc, this.gzc, this.gbc];
    }

    /**
     * Forward over a sequence. xs[t] has inputDim entries; returns per-step
     * state h[t] (t = 0..T, h[0] = 0) plus gate caches for the backward pass.
     */
    forward(xs: Float64Array[]): { h: Float64Array[]; u: Float64Array[]; r: Float64Array[]; c: Float64Array[] } {
        const T = xs.length;
        const H = this.hiddenDim;
        const h: Float64Array[] = [new Float64Array(H)];
        const u: Float64Array[] = [];
        const r: Float64Array[] = [];
        const c: Float64Array[] = [];
        const tmp = new Float64Array(H);
        for (let t = 0; t < T; t++) {
            const hPrev = h[t];
            const ut = new Float64Array(H);
            const rt = new Float64Array(H);
            const ct = new Float64Array(H);
            matvec(this.wu, xs[t], ut, H, this.inputDim);
            matvec(this.zu, hPrev, ut, H, H, true);
            matvec(this.wr, xs[t], rt, H, this.inputDim);
            matvec(this.zr, hPrev, rt, H, H, true);
            for (let j = 0; j < H; j++) {
                ut[j] = sigmoid(ut[j] + this.bu[j]);
                rt[j] = sigmoid(rt[j] + this.br[j]);
                tmp[j] = rt[j] * hPrev[j];
            }
            matvec(this.wc, xs[t], ct, H, this.inputDim);
            matvec(this.zc, tmp, ct, H, H, true);
            const ht = new Float64Array(H);
            for (let j = 0; j < H; j++) {
                ct[j] = Math.tanh(ct[j] + this.bc[j]);
                ht[j] = (1 - ut[j]) * hPrev[j] + ut[j] * ct[j];
            }
            h.push(ht);
            u.push(ut);
            r.push(rt);
            c.push(ct);
        }
        return { h, u, r, c };
    }

    /**
     * Backward through the unrolled sequence. dhExt[t] is the gradient
     * arriving at h[t+1] from outside the recurrence (head or next layer).
     * Gradients accumulate into the g* buffers; returns per-step input
     * gradients for the layer below.
     */
    backward(
        xs: Float64Array[],
        cache: { h: Float64Array[]; u: Float64Array[]; r: Float64Array[]; c: Float64Array[] },
        dhExt: (Float64Array | null)[],
    ): Float64Array[] {
        const T = xs.length;
        const H = this.hiddenDim;
        const dxs: Float64Array[] = [];
        const dh = new Float64Array(H);
        const dau = new Float64Array(H);
        const dar = new Float64Array(H);
        const dac = new Float64Array(H);
        const s = new Float64Array(H);
        const rh = new Float64Array(H);
        for (let t = T - 1; t >= 0; t--) {
            const ext = dhExt[t];
            if (ext) for (let j = 0; j < H; j++) dh[j] += ext[j];
            const hPrev = cache.h[t];
            const u = cache.u[t];
            const r = cache.r[t];
            const c = cache.c[t];
            for (let j = 0; j < H; j++) {
                const duj = dh[j] * (c[j] - hPrev[j]);
                dau[j] = duj * u[j] * (1 - u[j]);
                const dcj = dh[j] * u[j];
                dac[j] = dcj * (1 - c[j] * c[j]);
                rh[j] = r[j] * hPrev[j];
            }
            s.fill(0);
            matvecT(this.zc, dac, s, H, H);
            for (let j = 0; j < H; j++) {
                const drj = s[j] * hPrev[j];
                dar[j] = drj * r[j] * (1 - r[j]);
            }
            outerAdd(this.gwu, dau, xs[t], H, this.inputDim);
            outerAdd(this.gzu, dau, hPrev, H, H);
            outerAdd(this.gwr, dar, xs[t], H, this.inputDim);
            outerAdd(this.gzr, dar, hPrev, H, H);
            outerAdd(this.gwc, dac, xs[t], H, this.inputDim);
            outerAdd(this.gzc, dac, rh, H, H);
            for (let j = 0; j < H; j++) {
                this.gbu[j] += dau[j];
                this.gbr[j] += dar[j];
                this.gbc[j] += dac[j];
            }
            const dx = new Float64Array(this.inputDim);
            matvecT(this.wu, dau, dx, H, this.inputDim);
            matvecT(this.wr, dar, dx, H, this.inputDim);
            matvecT(this.wc, dac, dx, H, this.inputDim);
            dxs.push(dx);
            // gradient flowing to h[t] (previous step's output)
            for (let j = 0; j < H; j++) {
                dh[j] = dh[j] * (1 - u[j]) + s[j] * r[j];
            }
            matvecT(this.zu, dau, dh, H, H);
            matvecT(this.zr, dar, dh, H, H);
        }
        dxs.reverse();
        return dxs;
    }
}

export interface NetConfig {
    inputDim: number;
    hiddenDim: number;
    tiles: number;
    inputLen: number;
    horizon: number;
    cutoff: number;
}

/** Full predictor: two recurrent layers, ReLU between, dense sigmoid head. */
export class PredictorNet {
    readonly cfg: NetConfig;
    l1: GruLayer;
    l2: GruLayer;
    wd: Float64Array;
    bd: Float64Array;
    gwd: Float64Array;
    gbd: Float64Array;

    constructor(cfg: NetConfig) {
        this.cfg = cfg;
        this.l1 = new GruLayer(cfg.inputDim, cfg.hiddenDim);
        this.l2 = new GruLayer(cfg.hiddenDim, cfg.hiddenDim);
        this.wd = new Float64Array(cfg.tiles * cfg.hiddenDim);
        this.bd = new Float64Array(cfg.tiles);
        this.gwd = new Float64Array(this.wd.length);
        this.gbd = new Float64Array(this.bd.length);
    }

    init(rng: Rng): void {
        this.l1.init(rng);
        this.l2.init(rng);
        const scale = 1 / Math.sqrt(this.cfg.hiddenDim);
        for (let i = 0; i < this.wd.length; i++) this.wd[i] = rng.uniform(-scale, scale);
    }

    params(): Float64Array[] {
        return [...this.l1.params(), ...this.l2.params(), this.wd, this.bd];
    }

    grads(): Float64Array[] {
        return [...this.l1.grads(), ...this.l2.grads(), this.gwd, this.gbd];
    }

    zeroGrads(): void {
        for (const g of this.grads()) g.fill(0);
    }

    /** Per-tile pre-sigmoid outputs for one normalized (T, inputDim) sequence. */
    logitsRaw(seq: Float64Array[]): { z: Float64Array; c1: ReturnType<GruLayer["forward"]>; c2: ReturnType<GruLayer["forward"]>; x2: Float64Array[] } {
        if (seq.length !== this.cfg.inputLen) {
            throw new Error(`sequence length ${seq.length} != ${this.cfg.inputLen}`);
        }
        const c1 = this.l1.forward(seq);
        const x2 = c1.h.slice(1).map((h) => {
            const v = new Float64Array(h.length);
            for (let j = 0; j < h.length; j++) v[j] = h[j] > 0 ? h[j] : 0;
            return v;
        });
        const c2 = this.l2.forward(x2);
        const hLast = c2.h[c2.h.length - 1];
        const z = new Float64Array(this.cfg.tiles);
        matvec(this.wd, hLast, z, this.cfg.tiles, this.cfg.hiddenDim);
        for (let n = 0; n < this.cfg.tiles; n++) z[n] += this.bd[n];
        return { z, c1, c2, x2 };
    }

    /** Tile probabilities for one sequence. */
    predict(seq: Float64Array[]): Float64Array {
        const { z } = this.logitsRaw(seq);
        const p = new Float64Array(z.length);
        for (let n = 0; n < z.length; n++) p[n] = sigmoid(z[n]);
        return p;
    }

    /**
     * Mean binary cross-entropy over tiles for one sample, with gradients
     * accumulated into the g* buffers. Works on logits for stability.
     */
    lossAndGrad(seq: Float64Array[], labels: Float64Array): number {
        const { z, c1, c2, x2 } = this.logitsRaw(seq);
        const N = this.cfg.tiles;
        const H = this.cfg.hiddenDim;
        let loss = 0;
        const dz = new Float64Array(N);
        for (let n = 0; n < N; n++) {
            loss += softplus(z[n]) - labels[n] * z[n];
            dz[n] = (sigmoid(z[n]) - labels[n]) / N;
        }
        loss /= N;

        const hLast = c2.h[c2.h.length - 1];
        for (let n = 0; n < N; n++) {
            this.gbd[n] += dz[n];
            const base = n * H;
            for (let j = 0; j < H; j++) this.gwd[base + j] += dz[n] * hLast[j];
        }
        const dhLast = new Float64Array(H);
        matvecT(this.wd, dz, dhLast, N, H);

        const T = this.cfg.inputLen;
        const ext2: (Float64Array | null)[] = new Array(T).fill(null);
        ext2[T - 1] = dhLast;
        const dx2 = this.l2.backward(x2, c2, ext2);

        const ext1: (Float64Array | null)[] = new Array(T).fill(null);
        for (let t = 0; t < T; t++) {
            const grad = new Float64Array(H);
            const h1 = c1.h[t + 1];
            for (let j = 0; j < H; j++) grad[j] = h1[j] > 0 ? dx2[t][j] : 0;
            ext1[t] = grad;
        }
        this.l1.backward(seq, c1, ext1);
        return loss;
    }
}

/** Adam with bias correction; one state entry per parameter buffer. */
export class Adam {
    private m: Float64Array[];
    private v: Float64Array[];
    private t = 0;

    constructor(
        private readonly params: Float64Array[],
        private readonly grads: Float64Array[],
        readonly lr = 0.01,
        readonly beta1 = 0.9,
        readonly beta2 = 0.999,
        readonly eps = 1e-8,
    ) {
        this.m = params.map((p) => new Float64Array(p.length));
        this.v = params.map((p) => new Float64Array(p.length));
    }

    step(scale = 1): void {
        this.t += 1;
        const c1 = 1 - Math.pow(this.beta1, this.t);
        const c2 = 1 - Math.pow(this.beta2, this.t);
        for (let i = 0; i < this.params.length; i++) {
            const p = this.params[i];
            const g = this.grads[i];
            const m = this.m[i];
            const v = this.v[i];
            for (let k = 0; k < p.length; k++) {
                const gk = g[k] * scale;
                m[k] = this.beta1 * m[k] + (1 - this.beta1) * gk;
                v[k] = this.beta2 * v[k] + (1 - this.beta2) * gk * gk;
                p[k] -= (this.lr * (m[k] / c1)) / (Math.sqrt(v[k] / c2) + this.eps);
            }
        }
    }
}
