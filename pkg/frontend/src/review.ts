// Review-screen state: one leased task at a time, a carousel over the
// thing's preview images, optional prediction overlays, and the decision
// draft being assembled.  All numbers shown come from the task payload.

import { ApiClient, ApiError } from "./api";
import {
  AssetSizeLookup,
  DecisionDraft,
  buildDecision,
  draftProblems,
  emptyDraft,
} from "./decisions";
import type { PredictionRecord, SubmitResponse, TaskRecord } from "./types";

export interface ReviewViewState {
  task: TaskRecord | null;
  carouselIndex: number;
  showLocalization: boolean;
  showProbabilities: boolean;
  /** Cutoff used when highlighting localization cells. */
  overlayTheta: number;
  draft: DecisionDraft;
  submitting: boolean;
  /** Inline server-side rejection (lease expired, invalid decision, ...). */
  serverError: string | null;
  /** Set when the queue has nothing for this moderator right now. */
  queueEmpty: boolean;
  lastSubmit: SubmitResponse | null;
}

export function initialReviewState(): ReviewViewState {
  return {
    task: null,
    carouselIndex: 0,
    showLocalization: true,
    showProbabilities: true,
    overlayTheta: 0.5,
    draft: emptyDraft(),
    submitting: false,
    serverError: null,
    queueEmpty: false,
    lastSubmit: null,
  };
}

/** Asset ids carrying localization grids, in stable order for the carousel. */
export function taskAssets(task: TaskRecord): string[] {
  return Object.keys(task.prediction.regions).sort();
}

export function currentAsset(state: ReviewViewState): string | null {
  if (!state.task) return null;
  const assets = taskAssets(state.task);
  if (assets.length === 0) return null;
  return assets[Math.min(state.carouselIndex, assets.length - 1)];
}

export function stepCarousel(state: ReviewViewState, delta: number): void {
  if (!state.task) return;
  const count = taskAssets(state.task).length;
  if (count === 0) return;
  state.carouselIndex = (((state.carouselIndex + delta) % count) + count) % count;
}

/**
 * Which localization cells to highlight: exactly those whose per-cell value
 * in the payload meets the overlay cutoff.
 */
export function overlayCells(
  prediction: PredictionRecord,
  assetId: string,
  theta: number,
): boolean[][] {
  const grid = prediction.regions[assetId];
  if (!grid) return [];
  return grid.map((row) => row.map((p) => p >= theta));
}

export function submitProblems(state: ReviewViewState, assetSize?: AssetSizeLookup): string[] {
  if (!state.task) return ["no task leased"];
  return draftProblems(state.draft, assetSize);
}

export function submitEnabled(state: ReviewViewState, assetSize?: AssetSizeLookup): boolean {
  return !state.submitting && state.task !== null && submitProblems(state, assetSize).length === 0;
}

export async function loadNextTask(state: ReviewViewState, api: ApiClient): Promise<void> {
  state.serverError = null;
  state.queueEmpty = false;
  try {
    state.task = await api.nextTask();
    state.carouselIndex = 0;
    state.draft = emptyDraft();
    state.lastSubmit = null;
  } catch (err) {
    if (err instanceof ApiError && err.code === "queue_empty") {
      state.task = null;
      state.queueEmpty = true;
      return;
    }
    state.serverError = describeError(err);
  }
}

/**
 * Build and POST the draft.  On server rejection the draft is kept so the
 * moderator can fix it; on success the screen is cleared for the next task.
 */
export async function submitDraft(
  state: ReviewViewState,
  api: ApiClient,
  moderatorId: string,
): Promise<SubmitResponse | null> {
  if (!state.task) return null;
  const decision = buildDecision(state.task.task_id, moderatorId, state.draft);
  state.submitting = true;
  state.serverError = null;
  try {
    const result = await api.submitReview(decision);
    state.lastSubmit = result;
    state.task = null;
    state.draft = emptyDraft();
    state.carouselIndex = 0;
    return result;
  } catch (err) {
    state.serverError = describeError(err);
    return null;
  } finally {
    state.submitting = false;
  }
}

export function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.detail}`;
  return err instanceof Error ? err.message : String(err);
}
