// Wire-format types for the service's JSON API.  Field names and shapes
// mirror the server records exactly; the console never reshapes payloads,
// it only reads them.

export type ReviewCase = "agree_finalize" | "missed_part" | "reject_detection";

export interface PredictionRecord {
  thing_id: string;
  probabilities: Record<string, number>;
  model_version: number;
  attributions: Record<string, [string, number][]>;
  /** Per-asset 3x3 localization grids, row-major. */
  regions: Record<string, number[][]>;
}

export interface LeaseRecord {
  moderator_id: string;
  expiry: string;
}

export interface TaskRecord {
  task_id: string;
  thing_id: string;
  prediction: PredictionRecord;
  state: string;
  created_at: string;
  reviewed_by: string[];
  lease: LeaseRecord;
}

export interface AnnotationRecord {
  asset_id: string;
  /** x, y, w, h in asset pixels. */
  bbox: [number, number, number, number];
  category_path: [string, string | null];
  level: number;
  rationale: string;
}

export interface GridCellRecord {
  asset_id: string;
  row: number;
  col: number;
}

export interface DecisionRecord {
  task_id: string;
  moderator_id: string;
  case: ReviewCase;
  selected_categories: string[];
  annotations: AnnotationRecord[];
  rejected_regions: GridCellRecord[];
}

export interface SubmitResponse {
  task_id: string;
  state: string;
  examples_emitted: number;
  examples_applied: number;
  model_version: number;
}

export interface GateRecord {
  status: "not_applicable" | "exempt" | "blocked";
  reason: string | null;
  explanation: string;
}

export interface SearchItem {
  thing_id: string;
  title: string;
  tags: string[];
  probabilities: Record<string, number>;
  flags: string[];
  gate: GateRecord;
}

export interface SearchResponse {
  items: SearchItem[];
  applied_thresholds: Record<string, number>;
  audience_group: string;
  page: number;
  page_size: number;
  total: number;
}

export interface ExampleItem {
  thing_id: string;
  title: string;
  max_probability: number;
  flags: string[];
}

export interface ExamplesResponse {
  threshold: number;
  examples: ExampleItem[];
}

export interface ExplanationAnnotation {
  moderator_id: string;
  case: ReviewCase;
  asset_id: string;
  bbox: number[];
  category_path: (string | null)[];
  level: number;
  rationale: string;
}

export interface ExplanationResponse {
  thing_id: string;
  title: string;
  prediction: PredictionRecord;
  model_version: number;
  annotations: ExplanationAnnotation[];
  reviews: { moderator_id: string; case: ReviewCase; submitted_at: string }[];
  gate: GateRecord;
  needs_discussion: boolean;
}

export interface ThresholdProfileRecord {
  audience_group: string;
  thresholds: Record<string, number>;
  update_count: number;
}

export interface ErrorBody {
  error: string;
  detail: string;
}
