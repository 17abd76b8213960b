/**
 * Minimal CSV writer for the soft-label file.
 *
 * Fields are quoted only when they contain a comma, quote, or newline, which
 * keeps plain numeric cells byte-stable while still round-tripping arbitrary
 * topic names through standard CSV parsers.
 */

function escapeField(field: string): string {
  if (/[",\n\r]/.test(field)) {
    return '"' + field.replace(/"/g, '""') + '"';
  }
  return field;
}

export function formatCsvRow(cells: ReadonlyArray<string>): string {
  return cells.map(escapeField).join(",");
}

export function formatSoftLabelCsv(
  docIds: ReadonlyArray<string>,
  names: ReadonlyArray<string>,
  rows: ReadonlyArray<ReadonlyArray<number>>,
): string {
  const lines = [formatCsvRow(["doc_id", ...names])];
  for (let d = 0; d < docIds.length; d++) {
    const row = rows[d];
    if (row.length !== names.length) {
      throw new Error(`row ${d} has ${row.length} probabilities for ${names.length} names`);
    }
    lines.push(formatCsvRow([docIds[d], ...row.map((p) => p.toString())]));
  }
  return lines.join("\n") + "\n";
}
