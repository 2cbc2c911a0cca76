/** Training loop (BPTT + Adam) and the accuracy evaluation aggregation. */
import { Sample } from "./data.js";
import { binarize, jaccard } from "./fov.js";
import { Adam, NetConfig, PredictorNet } from "./gru.js";
import { Rng } from "./rng.js";

export interface TrainOptions {
    hiddenDim: number;
    inputLen: number;
    horizon: number;
    tiles: number;
    cutoff: number;
    epochs: number;
    batchSize: number;
    learningRate: number;
    beta1: number;
    beta2: number;
    seed: number;
    logEvery?: number;
    onEpoch?: (epoch: number, meanLoss: number) => void;
}

export const DESK_DEFAULTS = {
    hiddenDim: 64,
    epochs: 20,
    batchSize: 128,
    learningRate: 0.01,
    beta1: 0.9,
    beta2: 0.999,
    cutoff: 0.5,
};

export interface TrainResult {
    net: PredictorNet;
    lossCurve: number[];
}

export interface Trainer {
    net: PredictorNet;
    /** One pass over the shuffled dataset; returns the mean sample loss. */
    runEpoch(): number;
}

export function createTrainer(samples: Sample[], opts: TrainOptions): Trainer {
    if (samples.length === 0) throw new Error("no training samples");
    const cfg: NetConfig = {
        inputDim: 3,
        hiddenDim: opts.hiddenDim,
        tiles: opts.tiles,
        inputLen: opts.inputLen,
        horizon: opts.horizon,
        cutoff: opts.cutoff,
    };
    const net = new PredictorNet(cfg);
    net.init(new Rng(opts.seed));
    const adam = new Adam(net.params(), net.grads(), opts.learningRate, opts.beta1, opts.beta2);
    const order = samples.map((_, i) => i);
    const shuffler = new Rng(opts.seed + 1);
    let epoch = 0;
    return {
        net,
        runEpoch(): number {
            shuffler.shuffle(order);
            let epochLoss = 0;
            for (let start = 0; start < order.length; start += opts.batchSize) {
                const batch = order.slice(start, start + opts.batchSize);
                net.zeroGrads();
                let batchLoss = 0;
                for (const idx of batch) {
                    batchLoss += net.lossAndGrad(samples[idx].seq, samples[idx].labels);
                }
                if (!Number.isFinite(batchLoss)) {
                    throw new Error(
                        `training diverged: non-finite loss at epoch ${epoch}, sample offset ${start}`,
                    );
                }
                adam.step(1 / batch.length);
                epochLoss += batchLoss;
            }
            epoch += 1;
            return epochLoss / order.length;
        },
    };
}

export function trainModel(samples: Sample[], opts: TrainOptions): TrainResult {
    const trainer = createTrainer(samples, opts);
    const lossCurve: number[] = [];
    for (let epoch = 0; epoch < opts.epochs; epoch++) {
        const mean = trainer.runEpoch();
        lossCurve.push(mean);
        opts.onEpoch?.(epoch, mean);
    }
    return { net: trainer.net, lossCurve };
}

export interface AccuracyReport {
    mean: number;
    std: number;
    perUser: Record<string, number>;
}

/**
 * Overlap between predicted and true viewports, averaged over each user's
 * frames first and then across users (the std is across users).
 */
export function evaluateModel(net: PredictorNet, samples: Sample[]): AccuracyReport {
    const perUserVals = new Map<number, number[]>();
    for (const s of samples) {
        const predicted = binarize(net.predict(s.seq), net.cfg.cutoff);
        const j = jaccard(predicted, s.targetFov);
        const list = perUserVals.get(s.user) ?? [];
        list.push(j);
        perUserVals.set(s.user, list);
    }
    return aggregate(perUserVals);
}

/** Hold-current baseline: predict the viewport stays where it is now. */
export function evaluatePersistence(samples: Sample[]): AccuracyReport {
    const perUserVals = new Map<number, number[]>();
    for (const s of samples) {
        const j = jaccard(s.currentFov, s.targetFov);
        const list = perUserVals.get(s.user) ?? [];
        list.push(j);
        perUserVals.set(s.user, list);
    }
    return aggregate(perUserVals);
}

function aggregate(perUserVals: Map<number, number[]>): AccuracyReport {
    const perUser: Record<string, number> = {};
    const userMeans: number[] = [];
    for (const [user, vals] of [...perUserVals.entries()].sort((a, b) => a[0] - b[0])) {
        const mean = vals.reduce((a, b) => a + b, 0) / vals.length;
        perUser[String(user)] = mean;
        userMeans.push(mean);
    }
    const mean = userMeans.reduce((a, b) => a + b, 0) / userMeans.length;
    const variance =
        userMeans.reduce((a, b) => a + (b - mean) * (b - mean), 0) / userMeans.length;
    return { mean, std: Math.sqrt(variance), perUser };
}
