// Golden parity: every field the client reports must match the CLI's file
// reports to 1e-9 on the same synthetic corpus.

import { join } from "node:path";
import { readFileSync } from "node:fs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { PanopticClient } from "../src/client.js";
import { decodeLabels } from "../src/encoding.js";
import type { Category, Report } from "../src/types.js";
import {
  type CliReport,
  type Service,
  cliEvaluate,
  makeTempDir,
  readJson,
  startService,
  synthCorpus,
} from "./harness.js";

const TOLERANCE = 1e-9;

let service: Service;
let client: PanopticClient;

beforeAll(async () => {
  service = await startService();
  client = new PanopticClient(service.baseUrl);
});

afterAll(() => {
  service?.stop();
});

function expectReportsMatch(got: Report, want: CliReport): void {
  const scopes = [
    [got.all, want.aggregates.all],
    [got.stuff, want.aggregates.stuff],
    [got.things, want.aggregates.things],
  ] as const;
  for (const [gotRow, wantRow] of scopes) {
    if (wantRow === null) {
      expect(gotRow).toBeNull();
      continue;
    }
    expect(gotRow).not.toBeNull();
    for (const [field, value] of Object.entries(wantRow)) {
      expect(
        Math.abs((gotRow as Record<string, number>)[field] - value),
      ).toBeLessThanOrEqual(TOLERANCE);
    }
  }
  expect(got.per_class.length).toBe(want.per_class.length);
  for (let i = 0; i < got.per_class.length; i++) {
    const gotRow = got.per_class[i] as unknown as Record<string, unknown>;
    const wantRow = want.per_class[i];
    for (const [field, value] of Object.entries(wantRow)) {
      if (typeof value === "number") {
        expect(Math.abs((gotRow[field] as number) - value))
          .toBeLessThanOrEqual(TOLERANCE);
      } else {
        expect(gotRow[field]).toBe(value);
      }
    }
  }
}

describe("bindings parity on the golden corpus", () => {
  it("evaluatePair matches per-image CLI reports", async () => {
    for (let i = 0; i < 6; i++) {
      const root = makeTempDir(`parity-pair-${i}-`);
      await synthCorpus(root, 1, 100 + i, ["drop", "jitter:1", "add:24"]);
      const cliReport = await cliEvaluate(root, join(root, "report.json"));

      const categoriesPath = join(root, "categories.json");
      const categories = readJson<Category[]>(categoriesPath);
      const gt = await client.loadPanoptic({
        rasterPath: join(root, "gt", "image_0000.png"),
        sidecarPath: join(root, "gt", "image_0000.json"),
        categoriesPath,
      });
      const pred = await client.loadPanoptic({
        rasterPath: join(root, "pred", "image_0000.png"),
        sidecarPath: join(root, "pred", "image_0000.json"),
        categoriesPath,
      });
      const report = await client.evaluatePair({
        gt: gt.labels,
        gtSegments: gt.segments,
        pred: pred.labels,
        predSegments: pred.segments,
        categories,
      });
      expectReportsMatch(report, cliReport);
    }
  });

  it("evaluateDirs matches the multi-image CLI report", async () => {
    const root = makeTempDir("parity-dirs-");
    await synthCorpus(root, 8, 500, ["relabel", "drop"]);
    const cliReport = await cliEvaluate(root, join(root, "report.json"));
    const report = await client.evaluateDirs({
      gtDir: join(root, "gt"),
      predDir: join(root, "pred"),
      categoriesPath: join(root, "categories.json"),
    });
    expectReportsMatch(report, cliReport);
  });

  it("identical arrays score a perfect PQ", async () => {
    const root = makeTempDir("parity-perfect-");
    await synthCorpus(root, 1, 900, []);
    const categoriesPath = join(root, "categories.json");
    const gt = await client.loadPanoptic({
      rasterPath: join(root, "gt", "image_0000.png"),
      sidecarPath: join(root, "gt", "image_0000.json"),
      categoriesPath,
    });
    const report = await client.evaluatePair({
      gt: gt.labels,
      gtSegments: gt.segments,
      pred: gt.labels,
      predSegments: gt.segments,
      categories: readJson<Category[]>(categoriesPath),
    });
    expect(report.all?.pq).toBe(1);
    expect(report.all?.fn).toBe(0);
  });

  it("raises the primary error text for unknown ids", async () => {
    const root = makeTempDir("parity-error-");
    await synthCorpus(root, 1, 950, []);
    const categoriesPath = join(root, "categories.json");
    const gt = await client.loadPanoptic({
      rasterPath: join(root, "gt", "image_0000.png"),
      sidecarPath: join(root, "gt", "image_0000.json"),
      categoriesPath,
    });
    const badSegments = gt.segments.map((s, i) =>
      i === 0 ? { ...s, class_id: 999 } : s,
    );
    await expect(
      client.evaluatePair({
        gt: gt.labels,
        gtSegments: badSegments,
        pred: gt.labels,
        predSegments: gt.segments,
        categories: readJson<Category[]>(categoriesPath),
      }),
    ).rejects.toThrow(/unknown class id 999/);
  });
});

describe("resolution and fusion through the service", () => {
  const categories: Category[] = [
    { id: 1, name: "sky", isthing: 0 },
    { id: 2, name: "road", isthing: 0 },
    { id: 3, name: "car", isthing: 1 },
  ];

  it("reproduces the overlap-resolution worked example", async () => {
    // A 100 px at 0.9 and B 100 px at 0.8 overlapping on 40 px: A intact,
    // B trimmed to 60 px and kept at keep fraction 0.5
    const resolved = await client.resolveOverlaps({
      width: 16,
      height: 10,
      instances: [
        { class_id: 3, score: 0.9, counts: [0, 100, 60] },
        { class_id: 3, score: 0.8, counts: [60, 100] },
      ],
      keepFraction: 0.5,
    });
    const { data } = decodeLabels(resolved.labels);
    const areas = new Map<number, number>();
    for (const v of data) areas.set(v, (areas.get(v) ?? 0) + 1);
    expect(areas.get(1)).toBe(100);
    expect(areas.get(2)).toBe(60);
    expect(resolved.segments.map((s) => s.class_id)).toEqual([3, 3]);
  });

  it("fuses things over stuff and voids uncovered thing pixels", async () => {
    const resolved = await client.resolveOverlaps({
      width: 4,
      height: 1,
      instances: [{ class_id: 3, score: 0.9, counts: [0, 2, 2] }],
    });
    // semantic: [road, road, car, sky] — the uncovered semantic car pixel
    // at x=2 is claimed by the instance; x=3 stays stuff
    const semantic = {
      shape: [1, 4] as [number, number],
      dtype: "int32" as const,
      data_b64: Buffer.from(Int32Array.from([2, 2, 3, 1]).buffer).toString(
        "base64",
      ),
    };
    const fused = await client.fuse({ things: resolved, semantic, categories });
    const { data } = decodeLabels(fused.labels);
    const classOf = new Map(fused.segments.map((s) => [s.id, s.class_id]));
    const rendered = Array.from(data).map((v) => (v === 0 ? 0 : classOf.get(v)));
    expect(rendered).toEqual([3, 3, 0, 1]);
  });
});
