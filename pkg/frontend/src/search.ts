// Search-screen state: free-text query, a personal threshold slider, the
// live example strip that answers "what does this cutoff catch", the result
// grid, and an explanation popover.  Fetch failures never wipe what is
// already on screen.

import { ApiClient } from "./api";
import { describeError } from "./review";
import type { ExamplesResponse, ExplanationResponse, SearchItem, SearchResponse } from "./types";

export const SLIDER_MIN = 0.05;
export const SLIDER_MAX = 0.95;
export const EXAMPLE_COUNT = 5;

export function clampSlider(value: number): number {
  if (Number.isNaN(value)) return SLIDER_MIN;
  return Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, value));
}

export interface PopoverState {
  thingId: string;
  payload: ExplanationResponse;
}

export interface SearchViewState {
  query: string;
  slider: number;
  exampleSeed: number;
  results: SearchResponse | null;
  examples: ExamplesResponse | null;
  popover: PopoverState | null;
  error: string | null;
}

export function initialSearchState(): SearchViewState {
  return {
    query: "",
    slider: 0.5,
    exampleSeed: 0,
    results: null,
    examples: null,
    popover: null,
    error: null,
  };
}

export async function runSearch(state: SearchViewState, api: ApiClient): Promise<void> {
  try {
    state.results = await api.search({ q: state.query, threshold: state.slider });
    state.error = null;
  } catch (err) {
    state.error = describeError(err);
  }
}

export async function refreshExamples(state: SearchViewState, api: ApiClient): Promise<void> {
  try {
    state.examples = await api.examples(state.slider, EXAMPLE_COUNT, state.exampleSeed);
    state.error = null;
  } catch (err) {
    state.error = describeError(err);
  }
}

/** Slider moved: clamp, then refresh both the example strip and results. */
export async function setSlider(state: SearchViewState, api: ApiClient, value: number): Promise<void> {
  state.slider = clampSlider(value);
  await refreshExamples(state, api);
  await runSearch(state, api);
}

export async function openExplanation(state: SearchViewState, api: ApiClient, thingId: string): Promise<void> {
  try {
    state.popover = { thingId, payload: await api.explanation(thingId) };
    state.error = null;
  } catch (err) {
    state.error = describeError(err);
  }
}

export function closeExplanation(state: SearchViewState): void {
  state.popover = null;
}

/** Result items rendered with at least one flag badge. */
export function flaggedItems(state: SearchViewState): SearchItem[] {
  if (!state.results) return [];
  return state.results.items.filter((item) => item.flags.length > 0);
}

/**
 * Rendering contract: every flagged badge corresponds to a probability in
 * the payload that meets the applied threshold.  The console displays only
 * payload numbers, so this should hold by construction; it is checked in
 * tests and used as a debug assertion by the DOM layer.
 */
export function flaggedSatisfyThreshold(state: SearchViewState): boolean {
  if (!state.results) return true;
  const applied = state.results.applied_thresholds;
  return state.results.items.every((item) =>
    item.flags.every((cat) => item.probabilities[cat] >= (applied[cat] ?? state.slider)),
  );
}
