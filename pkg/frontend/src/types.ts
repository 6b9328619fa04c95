// Gateway payload shapes (mirrors the engine's documented JSON API).

export interface StatusPayload {
  phase: "idle" | "training" | "paused";
  epoch: number;
  m: number;
  classes: number;
  mode: "sentence" | "word";
  sim_kind: string;
  digest: string;
  pending_commands: number;
  metrics: EpochMetrics | null;
  dataset_size: number;
}

export interface PrototypeCard {
  id: number;
  class: number;
  head_weight: number;
  frozen: boolean;
  display_text: string | null;
  source_id: string | null;
  highlight: number[] | null;
}

export interface PrototypesPayload {
  digest: string;
  prototypes: PrototypeCard[];
}

export interface ExplanationItem {
  prototype_id: number;
  similarity: number;
  head_weight: number;
  importance: number;
  display_text: string | null;
  rendered: string;
}

export interface ExplainPayload {
  predicted_class: number;
  probs: number[];
  items: ExplanationItem[];
}

export type FeedbackOp =
  | "remove"
  | "add"
  | "replace"
  | "reinit"
  | "finetune"
  | "prune"
  | "soft_replace"
  | "freeze"
  | "unfreeze";

export interface CommandBody {
  op: FeedbackOp;
  target?: number;
  example_id?: string;
  text?: string;
  certainty?: number;
  prune_threshold?: number;
  class?: number;
}

export interface OutcomeSide {
  val_acc: number | null;
  digest: string | null;
}

export interface OutcomePayload {
  accepted: boolean;
  before: OutcomeSide;
  after: OutcomeSide;
  retrain_epochs_used: number;
  message: string;
  op: string;
}

export interface EpochMetrics {
  phase: string;
  epoch: number;
  lr: number;
  terms: Record<string, number>;
  val_acc: number | null;
  m: number;
}

export interface StreamEvent {
  type: "hello" | "epoch" | "phase" | "done" | "error";
  [key: string]: unknown;
}

export interface ErrorPayload {
  error: string;
  detail: string;
}
