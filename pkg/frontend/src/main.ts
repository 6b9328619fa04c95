// App wiring: one confirmed-state store, one gateway client, and four
// panels (board, explanation, feedback, timeline). All mutation flows
// through the gateway's serialized queue; the UI re-renders only from
// acknowledged payloads and refetches the board whenever the model digest
// moves.

import { ApiClient, GatewayError } from "./api.js";
import { renderBoard } from "./board.js";
import { renderChart } from "./chart.js";
import { renderExplain } from "./explain.js";
import { renderFeedbackForm, renderOutcome, type FeedbackControls } from "./feedback.js";
import { Store } from "./state.js";
import type { CommandBody, EpochMetrics, StreamEvent } from "./types.js";

export class App {
  readonly store = new Store();
  readonly api: ApiClient;
  private controls: FeedbackControls | null = null;
  private panels!: Record<
    "banner" | "statusbar" | "board" | "explain" | "feedback" | "outcome" | "chart",
    HTMLElement
  >;
  private lastDigest: string | null = null;
  private stopStream: (() => void) | null = null;

  constructor(
    readonly root: HTMLElement,
    baseUrl: string,
    fetchFn: typeof fetch = fetch,
  ) {
    this.api = new ApiClient(baseUrl, fetchFn);
    this.buildLayout();
    this.store.subscribe(() => this.render());
  }

  async start(): Promise<void> {
    this.stopStream = this.api.streamMetrics(
      (event) => this.onStreamEvent(event),
      () => this.store.update({ connected: false }),
    );
    await this.refreshStatus();
    await this.refreshBoard();
  }

  stop(): void {
    this.stopStream?.();
  }

  // -- gateway round trips ---------------------------------------------------

  async refreshStatus(): Promise<void> {
    try {
      const status = await this.api.status();
      this.store.update({ connected: true, status });
      this.noteDigest(status.digest);
    } catch {
      this.store.update({ connected: false });
    }
  }

  async refreshBoard(): Promise<void> {
    const board = await this.api.prototypes();
    this.lastDigest = board.digest;
    this.store.update({ board, boardStale: false });
  }

  async runExplain(query: string): Promise<void> {
    const trimmed = query.trim();
    if (!trimmed) return;
    try {
      const payload = /\s/.test(trimmed)
        ? await this.api.explain({ tokens: trimmed.split(/\s+/), top_k: 4 })
        : await this.api.explain({ example_id: trimmed, top_k: 4 });
      this.store.update({ explanation: payload, explainError: null });
    } catch (err) {
      // surface capability/lookup errors verbatim next to the query box
      const message = err instanceof GatewayError ? `${err.code}: ${err.detail}` : String(err);
      this.store.update({ explanation: null, explainError: message });
    }
  }

  async submitFeedback(command: CommandBody): Promise<void> {
    const before = this.store.state.board?.prototypes ?? [];
    try {
      const outcome = await this.api.interact(command);
      await this.refreshBoard();
      const after = this.store.state.board?.prototypes ?? [];
      this.store.update({
        outcome,
        outcomeError: null,
        diff: { before, after },
      });
      await this.refreshStatus();
    } catch (err) {
      const message = err instanceof GatewayError ? `${err.code}: ${err.detail}` : String(err);
      this.store.update({ outcome: null, diff: null, outcomeError: message });
    }
  }

  private onStreamEvent(event: StreamEvent): void {
    this.store.update({ connected: true });
    if (event.type === "epoch") {
      this.store.pushMetrics(event as unknown as EpochMetrics);
      void this.refreshStatus();
    } else if (event.type === "hello" || event.type === "phase" || event.type === "done") {
      void this.refreshStatus();
    }
  }

  private noteDigest(digest: string): void {
    if (this.lastDigest !== null && digest !== this.lastDigest) {
      this.store.update({ boardStale: true });
      void this.refreshBoard();
    }
  }

  // -- layout and rendering ----------------------------------------------------

  private buildLayout(): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";

    const banner = doc.createElement("div");
    banner.id = "connection-banner";
    banner.hidden = true;
    const bannerText = doc.createElement("span");
    bannerText.textContent = "connection to the gateway lost";
    banner.appendChild(bannerText);
    const retry = doc.createElement("button");
    retry.id = "retry-connect";
    retry.textContent = "retry";
    retry.addEventListener("click", () => void this.start());
    banner.appendChild(retry);
    this.root.appendChild(banner);

    const statusbar = doc.createElement("div");
    statusbar.id = "statusbar";
    this.root.appendChild(statusbar);

    const controlsBar = doc.createElement("div");
    controlsBar.id = "train-controls";
    for (const [id, label, action] of [
      ["btn-train", "train", () => this.api.startTraining()],
      ["btn-pause", "pause", () => this.api.pause()],
      ["btn-resume", "resume", () => this.api.resume()],
    ] as const) {
      const btn = doc.createElement("button");
      btn.id = id;
      btn.textContent = label;
      btn.addEventListener("click", () => {
        void action()
          .then(() => this.refreshStatus())
          .catch((err) =>
            this.store.update({
              outcomeError: err instanceof GatewayError ? `${err.code}: ${err.detail}` : String(err),
            }),
          );
      });
      controlsBar.appendChild(btn);
    }
    this.root.appendChild(controlsBar);

    const grid = doc.createElement("div");
    grid.id = "layout";

    const boardPane = doc.createElement("section");
    boardPane.id = "board-pane";
    const boardTitle = doc.createElement("h2");
    boardTitle.textContent = "prototypes";
    boardPane.appendChild(boardTitle);
    const board = doc.createElement("div");
    board.id = "board";
    boardPane.appendChild(board);
    grid.appendChild(boardPane);

    const side = doc.createElement("section");
    side.id = "side-pane";

    const explainTitle = doc.createElement("h2");
    explainTitle.textContent = "explain";
    side.appendChild(explainTitle);
    const queryForm = doc.createElement("form");
    queryForm.id = "explain-form";
    const queryInput = doc.createElement("input");
    queryInput.id = "explain-query";
    queryInput.placeholder = "example id (e0) or raw text";
    queryForm.appendChild(queryInput);
    const queryBtn = doc.createElement("button");
    queryBtn.id = "explain-run";
    queryBtn.type = "submit";
    queryBtn.textContent = "explain";
    queryForm.appendChild(queryBtn);
    queryForm.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.runExplain(queryInput.value);
    });
    side.appendChild(queryForm);
    const explain = doc.createElement("div");
    explain.id = "explain";
    side.appendChild(explain);

    const feedbackTitle = doc.createElement("h2");
    feedbackTitle.textContent = "feedback";
    side.appendChild(feedbackTitle);
    const feedback = doc.createElement("div");
    feedback.id = "feedback";
    side.appendChild(feedback);
    const outcome = doc.createElement("div");
    outcome.id = "outcome";
    side.appendChild(outcome);

    const chartTitle = doc.createElement("h2");
    chartTitle.textContent = "training timeline";
    side.appendChild(chartTitle);
    const chart = doc.createElement("div");
    chart.id = "chart";
    side.appendChild(chart);

    grid.appendChild(side);
    this.root.appendChild(grid);

    this.panels = { banner, statusbar, board, explain, feedback, outcome, chart };
    this.controls = renderFeedbackForm(feedback, {
      onSubmit: (command) => void this.submitFeedback(command),
    });
  }

  private render(): void {
    const state = this.store.state;
    this.panels.banner.hidden = state.connected;

    const status = state.status;
    this.panels.statusbar.textContent = status
      ? `phase ${status.phase} | epoch ${status.epoch} | m = ${status.m} | ` +
        `${status.mode}/${status.sim_kind} | digest ${status.digest.slice(0, 10)} | ` +
        `queued commands ${status.pending_commands}`
      : "connecting...";

    renderBoard(this.panels.board, state, {
      onSelect: (id) => {
        this.store.update({ selectedPrototype: id });
        this.controls?.setTarget(id);
      },
      onToggleFreeze: (card) =>
        void this.submitFeedback({
          op: card.frozen ? "unfreeze" : "freeze",
          target: card.id,
        }),
    });
    renderExplain(this.panels.explain, state);
    renderOutcome(this.panels.outcome, state);
    renderChart(this.panels.chart, state.history);
  }
}

export function createApp(root: HTMLElement, baseUrl: string, fetchFn?: typeof fetch): App {
  return new App(root, baseUrl, fetchFn);
}

declare global {
  interface Window {
    curatorApp?: App;
  }
}

// browser entry point: mount on #app against same-origin or ?gateway=...
if (typeof window !== "undefined" && typeof document !== "undefined") {
  const mount = document.getElementById("app");
  if (mount) {
    const params = new URLSearchParams(window.location.search);
    const base = params.get("gateway") ?? "http://127.0.0.1:8008";
    const app = createApp(mount, base);
    window.curatorApp = app;
    void app.start();
  }
}
