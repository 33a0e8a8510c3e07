/**
 * Annotation round trip against the real service, driven through the same
 * client code the UI event handlers call (no browser runtime exists in this
 * environment, so this stands in for a browser automation script).
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionController } from "../src/session.js";

const PORT = 18700 + Math.floor(Math.random() * 1000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;

async function waitForServer(): Promise<void> {
    for (let attempt = 0; attempt < 100; attempt++) {
        try {
            const response = await fetch(`${BASE}/api/clips`);
            if (response.ok) {
                return;
            }
        } catch {
            // not up yet
        }
        await new Promise((resolve) => setTimeout(resolve, 150));
    }
    throw new Error("annotation service did not come up");
}

beforeAll(async () => {
    const root = mkdtempSync(join(tmpdir(), "annot-e2e-"));
    const manifest = join(root, "clips.jsonl");
    writeFileSync(
        manifest,
        [
            JSON.stringify({
                clip_id: "clip01",
                label: "vacuum cleaner",
                duration_s: 10.0,
                model: "gen-a",
                sublabel: "vacuum",
            }),
        ].join("\n") + "\n",
    );
    server = spawn(
        "python3",
        [
            "-m",
            "ihkit.cli",
            "serve",
            "--store",
            join(root, "store"),
            "--manifest",
            manifest,
            "--port",
            String(PORT),
        ],
        { stdio: "ignore" },
    );
    await waitForServer();
}, 30_000);

afterAll(() => {
    server?.kill();
});

describe("annotation round trip", () => {
    it("a segment entered at [0.50, 1.20] exports byte-exactly", async () => {
        const api = new ApiClient(BASE);
        const session = new SessionController(api, "clip01", "annotator1");
        await session.load();

        expect(await session.addSegment("speech", 50, 120)).toBe(true);
        await session.submit();

        const jsonl = await api.exportRecords("jsonl");
        expect(jsonl).toBe(
            '{"clip_id": "clip01", "model": "gen-a", "sublabel": "vacuum",' +
                ' "segment_type": "speech", "start": 0.50, "end": 1.20}\n',
        );
        const csv = await api.exportRecords("csv");
        expect(csv).toBe(
            "clip_id,model,sublabel,segment_type,start,end\n" +
                "clip01,gen-a,vacuum,speech,0.50,1.20\n",
        );
    });

    it("stale-version writes conflict and lose no data", async () => {
        const api = new ApiClient(BASE);
        const first = new SessionController(api, "clip01", "annotator2");
        const second = new SessionController(api, "clip01", "annotator2");
        await first.load();
        await second.load();

        expect(await first.addSegment("music", 200, 350)).toBe(true);

        // `second` still believes the old version; its write must conflict
        expect(await second.addSegment("speech", 400, 500)).toBe(false);
        expect(second.phase).toBe("conflict");

        // the first writer's data is intact on the server
        const view = await api.getAnnotations("clip01", "annotator2");
        expect(view.version).toBe(first.version);
        expect(view.segments).toEqual([
            { segment_type: "music", start: 2.0, end: 3.5, keep_short: false },
        ]);

        // reload-and-reapply merges the late writer's draft on top
        expect(await second.reloadAndReapply()).toBe(true);
        const merged = await api.getAnnotations("clip01", "annotator2");
        expect(merged.segments).toHaveLength(2);
    });

    it("submitted sessions refuse writes", async () => {
        const api = new ApiClient(BASE);
        const session = new SessionController(api, "clip01", "annotator3");
        await session.load();
        await session.addSegment("speech", 100, 200);
        await session.submit();

        const direct = await api.putAnnotations("clip01", "annotator3", session.version, []);
        expect(direct.ok).toBe(false);
        if (!direct.ok) {
            expect(direct.error).toBe("session_submitted");
        }
    });

    it("a reload reconstructs the session from the server", async () => {
        const api = new ApiClient(BASE);
        const session = new SessionController(api, "clip01", "annotator4");
        await session.load();
        await session.addSegment("music", 123, 456);

        const fresh = new SessionController(api, "clip01", "annotator4");
        await fresh.load();
        expect(fresh.version).toBe(session.version);
        expect(fresh.store.drafts).toHaveLength(1);
        expect(fresh.store.drafts[0].startCs).toBe(123);
        expect(fresh.store.drafts[0].endCs).toBe(456);
    });
});
