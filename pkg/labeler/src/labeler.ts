/**
 * The labeling job: every retained document is paired with every topic
 * name's filled hypothesis, scored in batches, and assembled into the
 * engine's soft-label matrix.
 *
 * Probabilities are written raw; sharpening and normalization belong to the
 * engine's own pipeline. Output row order is exactly the document order no
 * matter how scoring is batched.
 */

import { RetainedDocument } from "./corpus.js";
import { formatSoftLabelCsv } from "./csv.js";
import { EntailmentScorer, PremiseHypothesis } from "./scorer.js";
import { fillTemplate, validateTemplate } from "./template.js";

export interface LabelJob {
  documents: ReadonlyArray<RetainedDocument>;
  names: ReadonlyArray<string>;
  template: string;
  batchSize: number;
}

export interface LabelResult {
  docIds: string[];
  names: string[];
  /** rows[d][k] = entailment probability of document d for name k. */
  rows: number[][];
}

export async function runLabelJob(job: LabelJob, scorer: EntailmentScorer): Promise<LabelResult> {
  validateTemplate(job.template);
  if (job.names.length === 0) {
    throw new Error("at least one topic name is required");
  }
  if (job.documents.length === 0) {
    throw new Error("no documents to label");
  }
  if (!Number.isInteger(job.batchSize) || job.batchSize < 1) {
    throw new Error(`batch size must be a positive integer, got ${job.batchSize}`);
  }
  const hypotheses = job.names.map((name) => fillTemplate(job.template, name));
  const pairs: PremiseHypothesis[] = [];
  for (const doc of job.documents) {
    for (const hypothesis of hypotheses) {
      pairs.push({ premise: doc.text, hypothesis });
    }
  }
  const flat: number[] = [];
  for (let start = 0; start < pairs.length; start += job.batchSize) {
    const scores = await scorer.score(pairs.slice(start, start + job.batchSize));
    for (const p of scores) {
      if (!Number.isFinite(p) || p < 0 || p > 1) {
        throw new Error(`scorer returned a probability outside [0, 1]: ${p}`);
      }
      flat.push(p);
    }
  }
  if (flat.length !== pairs.length) {
    throw new Error(`scorer returned ${flat.length} scores for ${pairs.length} pairs`);
  }
  const rows: number[][] = [];
  for (let d = 0; d < job.documents.length; d++) {
    rows.push(flat.slice(d * job.names.length, (d + 1) * job.names.length));
  }
  return {
    docIds: job.documents.map((doc) => String(doc.index)),
    names: [...job.names],
    rows,
  };
}

export function toCsv(result: LabelResult): string {
  return formatSoftLabelCsv(result.docIds, result.names, result.rows);
}
