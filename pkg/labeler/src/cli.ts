#!/usr/bin/env node
/**
 * Command line for the offline labeler.
 *
 * Reads the engine's corpus text file plus its drop report, scores every
 * retained document against every topic name with a pretrained entailment
 * model, and writes the soft-label CSV the engine ingests unchanged.
 */

import { mkdirSync, renameSync, writeFileSync } from "node:fs";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { parseArgs } from "node:util";
import process from "node:process";

import { readDocuments, readDroppedIndices, retainedDocuments } from "./corpus.js";
import { runLabelJob, toCsv } from "./labeler.js";
import { EntailmentScorer, NliScorer } from "./scorer.js";
import { DEFAULT_TEMPLATE } from "./template.js";

export const DEFAULT_MODEL = "Xenova/nli-deberta-v3-xsmall";

const USAGE = `usage: entailment-labeler --corpus docs.txt --names "sports,politics" --out labels.csv
       [--drop-report corpus/drops.txt] [--template "This document is about {name}."]
       [--model <hf id or local dir>] [--batch-size 16]`;

export interface CliOptions {
  corpus: string;
  out: string;
  names: string[];
  dropReport?: string;
  template: string;
  model: string;
  batchSize: number;
}

export function parseCli(argv: string[]): CliOptions {
  const { values } = parseArgs({
    args: argv,
    options: {
      corpus: { type: "string" },
      "drop-report": { type: "string" },
      names: { type: "string" },
      template: { type: "string", default: DEFAULT_TEMPLATE },
      out: { type: "string" },
      model: { type: "string", default: DEFAULT_MODEL },
      "batch-size": { type: "string", default: "16" },
    },
  });
  if (!values.corpus || !values.names || !values.out) {
    throw new Error(`--corpus, --names, and --out are required\n${USAGE}`);
  }
  const names = values.names.split(",").map((n) => n.trim()).filter((n) => n.length > 0);
  if (names.length === 0) {
    throw new Error("--names must list at least one topic name");
  }
  const batchSize = Number(values["batch-size"]);
  return {
    corpus: values.corpus,
    out: values.out,
    names,
    dropReport: values["drop-report"],
    template: values.template!,
    model: values.model!,
    batchSize,
  };
}

function writeAtomic(path: string, text: string): void {
  mkdirSync(dirname(path) || ".", { recursive: true });
  const tmp = join(dirname(path) || ".", `.${Date.now()}.${process.pid}.tmp`);
  writeFileSync(tmp, text, "utf-8");
  renameSync(tmp, path);
}

export async function run(options: CliOptions, scorer?: EntailmentScorer): Promise<void> {
  const lines = readDocuments(options.corpus);
  const dropped = options.dropReport ? readDroppedIndices(options.dropReport) : new Set<number>();
  const documents = retainedDocuments(lines, dropped);
  const backend =
    scorer ??
    new NliScorer({
      model: options.model,
      onTruncation: (tokens, limit) =>
        console.warn(`warning: premise of ${tokens} tokens head-truncated to ${limit}`),
    });
  const result = await runLabelJob(
    {
      documents,
      names: options.names,
      template: options.template,
      batchSize: options.batchSize,
    },
    backend,
  );
  writeAtomic(options.out, toCsv(result));
  console.log(`wrote ${result.rows.length} rows x ${result.names.length} names to ${options.out}`);
}

export async function main(argv: string[]): Promise<number> {
  try {
    await run(parseCli(argv));
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && fileURLToPath(import.meta.url) === resolve(process.argv[1]);
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
