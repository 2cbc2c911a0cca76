/**
 * Pose trace ingestion and sliding-window dataset construction.
 *
 * Traces use the simulator's CSV schema (user_id, video_id, frame_index,
 * yaw, pitch, roll; 1-based frames, gaps held from the previous row).
 */
import { readFileSync, writeFileSync } from "node:fs";

import { DEFAULT_GRID, TileGrid, poseToFov, poseToLabels, wrapAngle } from "./fov.js";
import { Rng } from "./rng.js";

export interface Trace {
    user: number;
    video: number;
    poses: Float64Array[]; // per frame [yaw, pitch, roll] degrees
}

export const TRACE_HEADER = "user_id,video_id,frame_index,yaw,pitch,roll";

export function loadTraces(path: string): Trace[] {
    const lines = readFileSync(path, "utf-8").split(/\r?\n/).filter((l) => l.length > 0);
    if (lines.length === 0) throw new Error("trace file is empty (header row required)");
    const header = lines[0].split(",").map((h) => h.trim()).join(",");
    if (header !== TRACE_HEADER) {
        throw new Error(`bad header ${lines[0]!}; expected ${TRACE_HEADER}`);
    }
    const raw = new Map<string, [number, number, number, number][]>();
    for (let i = 1; i < lines.length; i++) {
        const parts = lines[i].split(",");
        if (parts.length !== 6) throw new Error(`line ${i + 1}: expected 6 fields`);
        const nums = parts.map(Number);
        if (nums.some((v) => Number.isNaN(v))) throw new Error(`line ${i + 1}: non-numeric field`);
        const [user, video, frame, yaw, pitch, roll] = nums;
        if (frame < 1) throw new Error(`line ${i + 1}: frame index must be >= 1`);
        const key = `${user}:${video}`;
        const seq = raw.get(key) ?? [];
        if (seq.length > 0 && frame <= seq[seq.length - 1][0]) {
            throw new Error(`line ${i + 1}: frame index not increasing for user ${user}`);
        }
        seq.push([frame, wrapAngle(yaw), pitch, roll]);
        raw.set(key, seq);
    }
    const traces: Trace[] = [];
    for (const [key, seq] of raw) {
        const [user, video] = key.split(":").map(Number);
        const last = seq[seq.length - 1][0];
        const poses: Float64Array[] = [];
        let cursor = 0;
        let current = new Float64Array([seq[0][1], seq[0][2], seq[0][3]]);
        for (let f = 1; f <= last; f++) {
            if (cursor < seq.length && seq[cursor][0] === f) {
                current = new Float64Array([seq[cursor][1], seq[cursor][2], seq[cursor][3]]);
                cursor++;
            }
            poses.push(current);
        }
        traces.push({ user, video, poses });
    }
    traces.sort((a, b) => a.user - b.user || a.video - b.video);
    return traces;
}

export function normalizePose(pose: Float64Array): Float64Array {
    return new Float64Array([pose[0] / 180, pose[1] / 90, pose[2] / 180]);
}

export interface Sample {
    user: number;
    seq: Float64Array[]; // inputLen normalized poses
    labels: Float64Array; // tile indicator vector at the target frame
    targetFov: Set<number>;
    currentFov: Set<number>; // viewport at the sequence end (persistence baseline)
}

/**
 * Sliding windows over one trace: the history covers inputLen consecutive
 * frames ending at f, the label is the viewport at f + horizon. The first
 * window starts one past a full history span, so a trace of L frames yields
 * L - inputLen - horizon samples.
 */
export function buildSamples(
    trace: Trace,
    inputLen: number,
    horizon: number,
    grid: TileGrid = DEFAULT_GRID,
): Sample[] {
    const out: Sample[] = [];
    const L = trace.poses.length;
    for (let f = inputLen + 1; f <= L - horizon; f++) {
        const seq: Float64Array[] = [];
        for (let g = f - inputLen + 1; g <= f; g++) seq.push(normalizePose(trace.poses[g - 1]));
        const target = trace.poses[f + horizon - 1];
        const current = trace.poses[f - 1];
        const labels = poseToLabels(target[0], target[1], grid);
        out.push({
            user: trace.user,
            seq,
            labels,
            targetFov: poseToFov(target[0], target[1], grid),
            currentFov: poseToFov(current[0], current[1], grid),
        });
    }
    return out;
}

/**
 * Synthetic head motion with persistent velocity: yaw follows a random walk
 * whose velocity decorrelates slowly, so the near future is predictable from
 * momentum (a trained predictor can beat holding the current viewport) while
 * accumulated velocity noise makes accuracy degrade with the horizon.
 */
export function synthesizeTraces(
    users: number,
    frames: number,
    videos: number,
    seed: number,
    velocityStdDegPerFrame = 5.0,
    velocityPersistence = 0.97,
): Trace[] {
    const rng = new Rng(seed);
    const sigmaV = velocityStdDegPerFrame * Math.sqrt(1 - velocityPersistence ** 2);
    const traces: Trace[] = [];
    for (let u = 0; u < users; u++) {
        const video = u % videos;
        let yaw = rng.uniform(-180, 180);
        let vYaw = rng.normal(0, velocityStdDegPerFrame);
        const pitchBias = Math.max(-20, Math.min(20, rng.normal(0, 8)));
        let pitch = pitchBias;
        let vPitch = 0;
        const poses: Float64Array[] = [];
        for (let f = 0; f < frames; f++) {
            poses.push(new Float64Array([yaw, pitch, 0]));
            vYaw = velocityPersistence * vYaw + rng.normal(0, sigmaV);
            yaw = wrapAngle(yaw + vYaw);
            vPitch = 0.9 * vPitch + rng.normal(0, 0.12);
            pitch = Math.max(-25, Math.min(25, pitch + vPitch + 0.02 * (pitchBias - pitch)));
        }
        traces.push({ user: u, video, poses });
    }
    return traces;
}

export function writeTraceCsv(traces: Trace[], path: string): void {
    const lines = [TRACE_HEADER];
    for (const t of traces) {
        t.poses.forEach((p, i) => {
            lines.push(
                `${t.user},${t.video},${i + 1},${p[0].toFixed(4)},${p[1].toFixed(4)},${p[2].toFixed(4)}`,
            );
        });
    }
    writeFileSync(path, lines.join("\n") + "\n");
}
