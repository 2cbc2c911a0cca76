#!/usr/bin/env node
/**
 * Trainer CLI.
 *
 *   synth     write a synthetic pose trace CSV
 *   train     train one model per requested horizon and export weight files
 *   evaluate  score weight files against a trace CSV (accuracy report JSON)
 *   infer     print logits for normalized sequences (parity debugging)
 */
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import process from "node:process";

import { buildSamples, loadTraces, synthesizeTraces, writeTraceCsv } from "./data.js";
import { DEFAULT_GRID } from "./fov.js";
import { DESK_DEFAULTS, evaluateModel, evaluatePersistence, trainModel } from "./train.js";
import { exportWeights, importWeights } from "./weights.js";

interface Args {
    command: string;
    flags: Map<string, string>;
}

function parseArgs(argv: string[]): Args {
    if (argv.length === 0) throw new Error("missing command");
    const flags = new Map<string, string>();
    for (let i = 1; i < argv.length; i++) {
        const arg = argv[i];
        if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
        const key = arg.slice(2);
        const value = argv[i + 1];
        if (value === undefined) throw new Error(`flag --${key} needs a value`);
        flags.set(key, value);
        i++;
    }
    return { command: argv[0], flags };
}

function num(flags: Map<string, string>, key: string, fallback: number): number {
    const raw = flags.get(key);
    if (raw === undefined) return fallback;
    const v = Number(raw);
    if (Number.isNaN(v)) throw new Error(`flag --${key} expects a number`);
    return v;
}

function str(flags: Map<string, string>, key: string, fallback?: string): string {
    const v = flags.get(key) ?? fallback;
    if (v === undefined) throw new Error(`flag --${key} is required`);
    return v;
}

function cmdSynth(flags: Map<string, string>): void {
    const traces = synthesizeTraces(
        num(flags, "users", 20),
        num(flags, "frames", 600),
        num(flags, "videos", 1),
        num(flags, "seed", 0),
    );
    const out = str(flags, "out");
    writeTraceCsv(traces, out);
    console.log(`wrote ${traces.length} traces to ${out}`);
}

function cmdTrain(flags: Map<string, string>): void {
    const tracesPath = str(flags, "traces");
    const video = num(flags, "video", 0);
    const horizons = str(flags, "horizons", "5").split(",").map(Number);
    const inputLen = num(flags, "history", 30);
    const hidden = num(flags, "hidden", DESK_DEFAULTS.hiddenDim);
    const epochs = num(flags, "epochs", DESK_DEFAULTS.epochs);
    const batch = num(flags, "batch", DESK_DEFAULTS.batchSize);
    const lr = num(flags, "lr", DESK_DEFAULTS.learningRate);
    const seed = num(flags, "seed", 0);
    const outDir = str(flags, "out");
    const holdout = num(flags, "holdout-users", 0);
    mkdirSync(outDir, { recursive: true });

    const all = loadTraces(tracesPath).filter((t) => t.video === video);
    if (all.length === 0) throw new Error(`no traces for video ${video}`);
    const testUsers = new Set(all.slice(all.length - holdout).map((t) => t.user));
    const trainTraces = all.filter((t) => !testUsers.has(t.user));

    const report: Record<string, unknown> = {};
    for (const horizon of horizons) {
        const trainSamples = trainTraces.flatMap((t) => buildSamples(t, inputLen, horizon));
        const { net, lossCurve } = trainModel(trainSamples, {
            hiddenDim: hidden,
            inputLen,
            horizon,
            tiles: DEFAULT_GRID.tilesH * DEFAULT_GRID.tilesV,
            cutoff: DESK_DEFAULTS.cutoff,
            epochs,
            batchSize: batch,
            learningRate: lr,
            beta1: DESK_DEFAULTS.beta1,
            beta2: DESK_DEFAULTS.beta2,
            seed,
            onEpoch: (e, l) => console.log(`video ${video} horizon ${horizon} epoch ${e}: loss ${l.toFixed(5)}`),
        });
        const weightPath = join(outDir, `v${video}_h${horizon}.bin`);
        exportWeights(net, weightPath);
        const evalTraces = holdout > 0 ? all.filter((t) => testUsers.has(t.user)) : trainTraces;
        const evalSamples = evalTraces.flatMap((t) => buildSamples(t, inputLen, horizon));
        const model = evaluateModel(net, evalSamples);
        const persistence = evaluatePersistence(evalSamples);
        report[`video=${video},horizon=${horizon}`] = {
            weights: weightPath,
            samples: trainSamples.length,
            final_loss: lossCurve[lossCurve.length - 1],
            model_jaccard: model,
            persistence_jaccard: persistence,
        };
    }
    const reportPath = join(outDir, "report.json");
    writeFileSync(reportPath, JSON.stringify(report, null, 2) + "\n");
    console.log(`wrote ${reportPath}`);
}

function cmdEvaluate(flags: Map<string, string>): void {
    const net = importWeights(str(flags, "weights"));
    const traces = loadTraces(str(flags, "traces")).filter(
        (t) => t.video === num(flags, "video", 0),
    );
    const samples = traces.flatMap((t) => buildSamples(t, net.cfg.inputLen, net.cfg.horizon));
    const report = {
        [`video=${num(flags, "video", 0)},horizon=${net.cfg.horizon}`]: {
            model_jaccard: evaluateModel(net, samples),
            persistence_jaccard: evaluatePersistence(samples),
        },
    };
    const out = flags.get("report");
    const text = JSON.stringify(report, null, 2) + "\n";
    if (out) {
        mkdirSync(dirname(out), { recursive: true });
        writeFileSync(out, text);
    } else {
        process.stdout.write(text);
    }
}

function cmdInfer(flags: Map<string, string>): void {
    const net = importWeights(str(flags, "weights"));
    const sequences: number[][][] = JSON.parse(readFileSync(str(flags, "input"), "utf-8"));
    const out = sequences.map((seq) => {
        if (seq.length !== net.cfg.inputLen) throw new Error("bad sequence length");
        const probs = net.predict(seq.map((row) => new Float64Array(row)));
        return Array.from(probs);
    });
    writeFileSync(str(flags, "out"), JSON.stringify(out) + "\n");
}

export function main(argv: string[]): number {
    try {
        const { command, flags } = parseArgs(argv);
        switch (command) {
            case "synth": cmdSynth(flags); break;
            case "train": cmdTrain(flags); break;
            case "evaluate": cmdEvaluate(flags); break;
            case "infer": cmdInfer(flags); break;
            default:
                throw new Error(`unknown command ${command}`);
        }
        return 0;
    } catch (err) {
        console.error(`error: ${(err as Error).message}`);
        return 1;
    }
}

const isDirect = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isDirect) {
    process.exit(main(process.argv.slice(2)));
}
