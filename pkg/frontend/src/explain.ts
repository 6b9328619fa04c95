// Explanation view: prediction, class probabilities, and one row per
// prototype showing the gateway's own `sim x weight = importance`
// rendering. Every number comes from the payload.

import type { AppState } from "./state.js";

export function renderExplain(container: HTMLElement, state: AppState): void {
  container.textContent = "";
  const doc = container.ownerDocument;
  if (state.explainError) {
    const err = doc.createElement("p");
    err.className = "inline-error";
    err.textContent = state.explainError;
    container.appendChild(err);
    return;
  }
  const result = state.explanation;
  if (!result) {
    const hint = doc.createElement("p");
    hint.className = "muted";
    hint.textContent = "query a stored example id or raw text";
    container.appendChild(hint);
    return;
  }

  const verdict = doc.createElement("p");
  verdict.className = "verdict";
  verdict.textContent =
    `predicted class ${result.predicted_class} ` +
    `(p = ${result.probs.map((p) => p.toFixed(3)).join(" / ")})`;
  container.appendChild(verdict);

  const table = doc.createElement("table");
  table.className = "explain-table";
  for (const item of result.items) {
    const row = doc.createElement("tr");
    row.className = "explain-row";
    row.dataset.importance = String(item.importance);
    row.dataset.similarity = String(item.similarity);
    row.dataset.weight = String(item.head_weight);

    const proto = doc.createElement("td");
    proto.className = "explain-proto";
    proto.textContent = `P${item.prototype_id}`;
    row.appendChild(proto);

    const score = doc.createElement("td");
    score.className = "explain-score";
    score.textContent = item.rendered; // the gateway's own arithmetic rendering
    row.appendChild(score);

    const text = doc.createElement("td");
    text.className = "explain-text";
    text.textContent = item.display_text ?? "(latent prototype)";
    row.appendChild(text);

    table.appendChild(row);
  }
  container.appendChild(table);
}
