import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { buildSamples, loadTraces, synthesizeTraces, writeTraceCsv } from "../src/data.js";
import { DEFAULT_GRID, jaccard, poseToFov } from "../src/fov.js";

function writeCsv(text: string): string {
    const dir = mkdtempSync(join(tmpdir(), "traces-"));
    const path = join(dir, "t.csv");
    writeFileSync(path, text);
    return path;
}

describe("viewport mapping", () => {
    it("centers a 36-tile window at the origin pose", () => {
        expect(poseToFov(0, 0, DEFAULT_GRID).size).toBe(36);
    });

    it("caps the window across the poles", () => {
        const top = poseToFov(0, 90, DEFAULT_GRID);
        expect(top.size).toBe(3 * DEFAULT_GRID.tilesH);
    });

    it("wraps across the longitude seam", () => {
        const tiles = poseToFov(179.9999, 0, DEFAULT_GRID);
        const cols = new Set([...tiles].map((n) => n % DEFAULT_GRID.tilesH));
        expect(cols.has(0)).toBe(true);
        expect(cols.has(DEFAULT_GRID.tilesH - 1)).toBe(true);
    });

    it("overlap index behaves", () => {
        const a = new Set([1, 2, 3]);
        expect(jaccard(a, a)).toBe(1);
        expect(jaccard(a, new Set([4]))).toBe(0);
        expect(jaccard(new Set(), new Set())).toBe(1);
    });
});

describe("trace parsing", () => {
    it("holds the previous pose across gaps", () => {
        const path = writeCsv(
            "user_id,video_id,frame_index,yaw,pitch,roll\n0,0,1,10,5,0\n0,0,3,20,6,0\n",
        );
        const traces = loadTraces(path);
        expect(traces[0].poses.length).toBe(3);
        expect(traces[0].poses[1][0]).toBe(10);
        expect(traces[0].poses[2][0]).toBe(20);
    });

    it("wraps out-of-range yaw", () => {
        const path = writeCsv("user_id,video_id,frame_index,yaw,pitch,roll\n0,0,1,400,0,0\n");
        expect(loadTraces(path)[0].poses[0][0]).toBeCloseTo(40, 9);
    });

    it("rejects bad headers and regressing frames", () => {
        expect(() => loadTraces(writeCsv("a,b\n"))).toThrow(/header/);
        const path = writeCsv(
            "user_id,video_id,frame_index,yaw,pitch,roll\n0,0,5,0,0,0\n0,0,4,0,0,0\n",
        );
        expect(() => loadTraces(path)).toThrow(/not increasing/);
    });
});

describe("dataset windows", () => {
    it("a 1800-frame trace with history 30 and horizon 5 yields 1765 samples", () => {
        const [trace] = synthesizeTraces(1, 1800, 1, 0);
        expect(buildSamples(trace, 30, 5).length).toBe(1800 - 30 - 5);
    });

    it("short traces yield nothing", () => {
        const [trace] = synthesizeTraces(1, 34, 1, 0);
        expect(buildSamples(trace, 30, 5).length).toBe(0);
    });

    it("labels match the target-frame viewport", () => {
        const [trace] = synthesizeTraces(1, 100, 1, 1);
        const samples = buildSamples(trace, 10, 5);
        const s = samples[0];
        let ones = 0;
        for (const v of s.labels) ones += v;
        expect(ones).toBe(s.targetFov.size);
        for (const n of s.targetFov) expect(s.labels[n]).toBe(1);
    });

    it("round-trips through the CSV format", () => {
        const traces = synthesizeTraces(3, 50, 2, 2);
        const dir = mkdtempSync(join(tmpdir(), "traces-"));
        const path = join(dir, "synth.csv");
        writeTraceCsv(traces, path);
        const back = loadTraces(path);
        expect(back.length).toBe(3);
        expect(back[0].poses.length).toBe(50);
        expect(back[1].video).toBe(1);
    });
});
