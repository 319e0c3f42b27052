// Draft state and client-side validation for the three review cases.
//
// The rules here duplicate the server's decision validation so the submit
// button can give instant feedback, but the server stays the authority: a
// draft that passes here can still be rejected (stale lease, frozen thing).

import { isTopLevel, isValidPath } from "./taxonomy";
import type { AnnotationRecord, DecisionRecord, GridCellRecord, ReviewCase } from "./types";

export const LOCALIZE_GRID = 3;
export const LEVEL_MIN = 1;
export const LEVEL_MAX = 5;

export interface BboxDraft {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface AnnotationDraft {
  assetId: string;
  bbox: BboxDraft | null;
  topCategory: string | null;
  subCategory: string | null;
  level: number;
  rationale: string;
}

export interface CellDraft {
  assetId: string;
  row: number;
  col: number;
}

export interface DecisionDraft {
  case: ReviewCase | null;
  selectedCategories: string[];
  annotations: AnnotationDraft[];
  rejectedCells: CellDraft[];
}

export function emptyDraft(): DecisionDraft {
  return { case: null, selectedCategories: [], annotations: [], rejectedCells: [] };
}

export function newAnnotationDraft(assetId: string): AnnotationDraft {
  return { assetId, bbox: null, topCategory: null, subCategory: null, level: 3, rationale: "" };
}

export type AssetSizeLookup = (assetId: string) => [number, number] | null;

/**
 * Everything still blocking submission, in display order.  Empty array
 * means the draft would serialize to a schema-valid decision.
 */
export function draftProblems(draft: DecisionDraft, assetSize?: AssetSizeLookup): string[] {
  const problems: string[] = [];
  switch (draft.case) {
    case null:
      return ["choose a review case"];
    case "agree_finalize":
      if (draft.selectedCategories.length === 0) {
        problems.push("select at least one category to confirm");
      }
      for (const cat of draft.selectedCategories) {
        if (!isTopLevel(cat)) problems.push(`unknown category "${cat}"`);
      }
      if (draft.annotations.length > 0 || draft.rejectedCells.length > 0) {
        problems.push("agree/finalize carries no annotations or rejected cells");
      }
      break;
    case "missed_part":
      if (draft.annotations.length === 0) {
        problems.push("add at least one annotation");
      }
      draft.annotations.forEach((ann, i) => {
        const where = draft.annotations.length > 1 ? `annotation ${i + 1}: ` : "";
        if (!ann.bbox) {
          problems.push(`${where}draw a bounding box`);
        } else {
          const { x, y, w, h } = ann.bbox;
          if (w <= 0 || h <= 0 || x < 0 || y < 0) {
            problems.push(`${where}bounding box needs positive size inside the image`);
          } else if (assetSize) {
            const size = assetSize(ann.assetId);
            if (!size) {
              problems.push(`${where}unknown asset "${ann.assetId}"`);
            } else if (x + w > size[0] || y + h > size[1]) {
              problems.push(`${where}bounding box exceeds the image bounds`);
            }
          }
        }
        if (!ann.topCategory) {
          problems.push(`${where}pick a category`);
        } else if (!isValidPath(ann.topCategory, ann.subCategory)) {
          problems.push(`${where}category path is not in the taxonomy`);
        }
        if (!Number.isInteger(ann.level) || ann.level < LEVEL_MIN || ann.level > LEVEL_MAX) {
          problems.push(`${where}sensitivity level must be ${LEVEL_MIN}-${LEVEL_MAX}`);
        }
        if (ann.rationale.trim() === "") {
          problems.push(`${where}enter a rationale`);
        }
      });
      if (draft.selectedCategories.length > 0 || draft.rejectedCells.length > 0) {
        problems.push("flag-missed-part carries only annotations");
      }
      break;
    case "reject_detection":
      if (draft.rejectedCells.length === 0) {
        problems.push("toggle off at least one detected cell");
      }
      for (const cell of draft.rejectedCells) {
        if (
          cell.row < 0 || cell.row >= LOCALIZE_GRID ||
          cell.col < 0 || cell.col >= LOCALIZE_GRID
        ) {
          problems.push(`cell (${cell.row}, ${cell.col}) is outside the 3x3 grid`);
        }
      }
      if (draft.selectedCategories.length > 0 || draft.annotations.length > 0) {
        problems.push("reject-detection carries only rejected cells");
      }
      break;
  }
  return problems;
}

/** Build the wire-format decision.  Throws if the draft is still invalid. */
export function buildDecision(taskId: string, moderatorId: string, draft: DecisionDraft): DecisionRecord {
  const problems = draftProblems(draft);
  if (problems.length > 0 || draft.case === null) {
    throw new Error(`draft not submittable: ${problems.join("; ")}`);
  }
  const annotations: AnnotationRecord[] = draft.annotations.map((ann) => ({
    asset_id: ann.assetId,
    bbox: [ann.bbox!.x, ann.bbox!.y, ann.bbox!.w, ann.bbox!.h],
    category_path: [ann.topCategory!, ann.subCategory],
    level: ann.level,
    rationale: ann.rationale,
  }));
  const rejected: GridCellRecord[] = draft.rejectedCells.map((cell) => ({
    asset_id: cell.assetId,
    row: cell.row,
    col: cell.col,
  }));
  return {
    task_id: taskId,
    moderator_id: moderatorId,
    case: draft.case,
    selected_categories: [...draft.selectedCategories],
    annotations,
    rejected_regions: rejected,
  };
}

/**
 * Canonical POST body.  Key order matches the server's own record layout
 * so a decision document is byte-identical whichever side serialized it.
 */
export function decisionJson(decision: DecisionRecord): string {
  const annotations = decision.annotations.map((a) => ({
    asset_id: a.asset_id,
    bbox: a.bbox,
    category_path: a.category_path,
    level: a.level,
    rationale: a.rationale,
  }));
  const rejected = decision.rejected_regions.map((c) => ({
    asset_id: c.asset_id,
    row: c.row,
    col: c.col,
  }));
  return JSON.stringify({
    task_id: decision.task_id,
    moderator_id: decision.moderator_id,
    case: decision.case,
    selected_categories: decision.selected_categories,
    annotations,
    rejected_regions: rejected,
  });
}
