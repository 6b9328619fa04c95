// Single confirmed-state store. The UI renders only what the gateway has
// acknowledged; there is no optimistic state anywhere.

import type {
  EpochMetrics,
  ExplainPayload,
  OutcomePayload,
  PrototypeCard,
  PrototypesPayload,
  StatusPayload,
} from "./types.js";

export interface PrototypeDiff {
  before: PrototypeCard[];
  after: PrototypeCard[];
}

export interface AppState {
  connected: boolean;
  status: StatusPayload | null;
  board: PrototypesPayload | null;
  boardStale: boolean;
  selectedPrototype: number | null;
  explanation: ExplainPayload | null;
  explainError: string | null;
  outcome: OutcomePayload | null;
  outcomeError: string | null;
  diff: PrototypeDiff | null;
  history: EpochMetrics[];
}

export function initialState(): AppState {
  return {
    connected: false,
    status: null,
    board: null,
    boardStale: false,
    selectedPrototype: null,
    explanation: null,
    explainError: null,
    outcome: null,
    outcomeError: null,
    diff: null,
    history: [],
  };
}

export class Store {
  private listeners: Array<(state: AppState) => void> = [];

  constructor(public state: AppState = initialState()) {}

  update(partial: Partial<AppState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  pushMetrics(metrics: EpochMetrics, cap = 500): void {
    const history = [...this.state.history, metrics].slice(-cap);
    this.update({ history });
  }

  subscribe(listener: (state: AppState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}
