/**
 * Hypothesis templates. A template must contain the placeholder "{name}"
 * exactly once; filling it with a topic's surface name yields the
 * hypothesis paired against each document.
 */

export const DEFAULT_TEMPLATE = "This document is about {name}.";

const PLACEHOLDER = "{name}";

export function validateTemplate(template: string): void {
  const first = template.indexOf(PLACEHOLDER);
  if (first === -1) {
    throw new Error(`template must contain ${PLACEHOLDER}: ${JSON.stringify(template)}`);
  }
  if (template.indexOf(PLACEHOLDER, first + 1) !== -1) {
    throw new Error(`template must contain ${PLACEHOLDER} exactly once: ${JSON.stringify(template)}`);
  }
}

export function fillTemplate(template: string, name: string): string {
  validateTemplate(template);
  return template.replace(PLACEHOLDER, name);
}
