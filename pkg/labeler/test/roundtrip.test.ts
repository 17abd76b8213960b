/**
 * Round trip against the engine: the CSV this package writes must load
 * through the engine's soft-label parser with zero validation errors, row
 * for row, against the corpus the engine itself built.
 *
 * Skips when python3 with the engine package is not available. The real
 * NLI model test at the bottom runs only when LABELER_NLI_MODEL points at a
 * usable local model directory.
 */

import assert from "node:assert/strict";
import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import test from "node:test";

import { readDroppedIndices, readDocuments, retainedDocuments } from "../src/corpus.js";
import { runLabelJob, toCsv } from "../src/labeler.js";
import { DEFAULT_TEMPLATE } from "../src/template.js";
import { NliScorer } from "../src/scorer.js";
import { KeywordScorer } from "./fake-scorer.js";

const LINES = [
  "the team won the game this season",
  "simmer the butter for the recipe in the oven",
  "!!!",
  "bank shares and market profit climbed",
];

const KEYWORDS = {
  sports: ["team", "game", "won", "season"],
  cooking: ["recipe", "oven", "butter", "simmer"],
  finance: ["market", "shares", "profit", "bank"],
};

function python(code: string): { ok: boolean; stdout: string; stderr: string } {
  const proc = spawnSync("python3", ["-c", code], { encoding: "utf-8" });
  return { ok: proc.status === 0, stdout: proc.stdout ?? "", stderr: proc.stderr ?? "" };
}

function engineAvailable(): boolean {
  return python("import topicbridge").ok;
}

test("labeler csv loads through the engine parser with zero errors", { skip: !engineAvailable() }, async () => {
  const dir = mkdtempSync(join(tmpdir(), "labeler-rt-"));
  const docsPath = join(dir, "docs.txt");
  writeFileSync(docsPath, LINES.join("\n") + "\n");

  // the engine builds the corpus and writes the drop report
  const build = python(
    `from topicbridge.cli import main; raise SystemExit(main(["build-corpus", "--input", ${JSON.stringify(
      docsPath,
    )}, "--out-dir", ${JSON.stringify(join(dir, "corpus"))}]))`,
  );
  assert.ok(build.ok, build.stderr);

  const docs = retainedDocuments(
    readDocuments(docsPath),
    readDroppedIndices(join(dir, "corpus", "drops.txt")),
  );
  const result = await runLabelJob(
    { documents: docs, names: Object.keys(KEYWORDS), template: DEFAULT_TEMPLATE, batchSize: 8 },
    new KeywordScorer(KEYWORDS),
  );
  const csvPath = join(dir, "labels.csv");
  writeFileSync(csvPath, toCsv(result));

  // the engine parser validates doc ids, row order, column names, and ranges
  const check = python(
    `
from topicbridge.corpus import load_corpus
from topicbridge.supervision import load_soft_labels
corpus = load_corpus(${JSON.stringify(join(dir, "corpus"))})
labels = load_soft_labels(${JSON.stringify(csvPath)}, corpus, ["sports", "cooking", "finance"])
assert labels.p.shape == (len(corpus.documents), 3)
assert (labels.p >= 0).all() and (labels.p <= 1).all()
print("ROUNDTRIP_OK", labels.p.shape)
`,
  );
  assert.ok(check.ok, check.stderr);
  assert.match(check.stdout, /ROUNDTRIP_OK/);
});

test(
  "real NLI model scores unambiguous fixtures sensibly",
  { skip: !process.env.LABELER_NLI_MODEL },
  async () => {
    const scorer = new NliScorer({ model: process.env.LABELER_NLI_MODEL! });
    const docs = [
      { index: 0, text: "the team won the game last night" },
      { index: 1, text: "interest rates and bank shares fell sharply" },
    ];
    const result = await runLabelJob(
      { documents: docs, names: ["sports", "business"], template: DEFAULT_TEMPLATE, batchSize: 4 },
      scorer,
    );
    assert.ok(result.rows[0][0] > result.rows[0][1], "sports doc should favor sports");
    assert.ok(result.rows[1][1] > result.rows[1][0], "finance doc should favor business");
    for (const row of result.rows) {
      for (const p of row) assert.ok(p >= 0 && p <= 1);
    }
  },
);
