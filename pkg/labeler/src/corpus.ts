/**
 * Reading the engine's corpus inputs: the raw one-document-per-line text
 * file and the drop report the corpus builder wrote next to it.
 *
 * The engine assigns doc_id = zero-based input line index and drops lines
 * that vectorize to nothing; consuming the drop report here keeps the label
 * rows aligned one-to-one, in order, with the retained documents.
 */

import { readFileSync } from "node:fs";

export interface RetainedDocument {
  /** Zero-based input line index; stringified, this is the engine's doc_id. */
  index: number;
  text: string;
}

function splitLines(raw: string): string[] {
  const lines = raw.split(/\r?\n/);
  if (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop();
  }
  return lines;
}

export function readDocuments(corpusPath: string): string[] {
  return splitLines(readFileSync(corpusPath, "utf-8"));
}

/** Parse the drop report ("<index>\t<reason>" per line) into an index set. */
export function readDroppedIndices(dropReportPath: string): Set<number> {
  const dropped = new Set<number>();
  for (const line of splitLines(readFileSync(dropReportPath, "utf-8"))) {
    if (!line) continue;
    const tab = line.indexOf("\t");
    const index = Number(tab === -1 ? line : line.slice(0, tab));
    if (!Number.isInteger(index) || index < 0) {
      throw new Error(`drop report line is not "<index>\\t<reason>": ${JSON.stringify(line)}`);
    }
    dropped.add(index);
  }
  return dropped;
}

export function retainedDocuments(
  lines: ReadonlyArray<string>,
  dropped: ReadonlySet<number>,
): RetainedDocument[] {
  const docs: RetainedDocument[] = [];
  for (let i = 0; i < lines.length; i++) {
    if (!dropped.has(i)) {
      docs.push({ index: i, text: lines[i] });
    }
  }
  return docs;
}
