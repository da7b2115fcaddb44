/** Pure helpers shared by the views: cell marks and SHA validation. */

import type { BuildState } from "./api.js";

export type Mark = "check" | "cross" | "dot";

const MARK_GLYPHS: Record<Mark, string> = {
  check: "✓", // green check mark
  cross: "✗", // red cross mark
  dot: "●", // yellow dot
};

/** Success -> check, Failure/Aborted -> cross, Pending/Running -> dot. */
export function markFor(state: BuildState): Mark {
  switch (state) {
    case "Success":
      return "check";
    case "Failure":
    case "Aborted":
      return "cross";
    case "Pending":
    case "Running":
      return "dot";
  }
}

export function glyphFor(mark: Mark): string {
  return MARK_GLYPHS[mark];
}

/** Client-side commit validation: at least 7 hex chars, at most 40. */
export function isValidSha(sha: string): boolean {
  return /^[0-9a-fA-F]{7,40}$/.test(sha.trim());
}
