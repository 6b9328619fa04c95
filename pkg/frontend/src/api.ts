// Typed gateway client. All mutation goes through the gateway's serialized
// command queue; this client never fabricates numbers, it only relays
// payload fields.

import type {
  CommandBody,
  ExplainPayload,
  OutcomePayload,
  PrototypesPayload,
  StatusPayload,
  StreamEvent,
} from "./types.js";

export class GatewayError extends Error {
  constructor(
    readonly code: string,
    readonly detail: string,
    readonly status: number,
  ) {
    super(`${code}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new GatewayError(body.error ?? "Unknown", body.detail ?? "", resp.status);
    }
    return body as T;
  }

  status(): Promise<StatusPayload> {
    return this.request("/v1/status");
  }

  prototypes(): Promise<PrototypesPayload> {
    return this.request("/v1/prototypes");
  }

  explain(query: { example_id?: string; tokens?: string[]; top_k?: number }): Promise<ExplainPayload> {
    return this.request("/v1/explain", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(query),
    });
  }

  interact(command: CommandBody): Promise<OutcomePayload> {
    return this.request("/v1/interact", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(command),
    });
  }

  startTraining(overrides: Record<string, unknown> = {}): Promise<{ status: string }> {
    return this.request("/v1/train", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(overrides),
    });
  }

  pause(): Promise<{ status: string }> {
    return this.request("/v1/train/pause", { method: "POST" });
  }

  resume(): Promise<{ status: string }> {
    return this.request("/v1/train/resume", { method: "POST" });
  }

  // Server-sent events over fetch streaming: works in browsers and node,
  // unlike EventSource which node lacks. Returns an abort handle.
  streamMetrics(onEvent: (event: StreamEvent) => void, onDrop?: () => void): () => void {
    const controller = new AbortController();
    const run = async () => {
      try {
        const resp = await this.fetchFn(`${this.baseUrl}/v1/metrics/stream`, {
          signal: controller.signal,
        });
        if (!resp.ok || !resp.body) throw new Error(`stream failed: ${resp.status}`);
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let sep: number;
          while ((sep = buffer.indexOf("\n\n")) >= 0) {
            const frame = buffer.slice(0, sep);
            buffer = buffer.slice(sep + 2);
            const data = frame
              .split("\n")
              .filter((line) => line.startsWith("data: "))
              .map((line) => line.slice(6))
              .join("\n");
            if (data) onEvent(JSON.parse(data) as StreamEvent);
          }
        }
        onDrop?.();
      } catch (err) {
        if (!controller.signal.aborted) onDrop?.();
      }
    };
    void run();
    return () => controller.abort();
  }
}
