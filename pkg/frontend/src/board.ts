// Prototype board: one card per prototype, grouped by class.

import type { AppState } from "./state.js";
import type { PrototypeCard } from "./types.js";

export interface BoardHandlers {
  onSelect(id: number): void;
  onToggleFreeze(card: PrototypeCard): void;
}

export function renderBoard(
  container: HTMLElement,
  state: AppState,
  handlers: BoardHandlers,
): void {
  container.textContent = "";
  const doc = container.ownerDocument;
  if (!state.board) {
    const empty = doc.createElement("p");
    empty.className = "muted";
    empty.textContent = "no prototypes loaded yet";
    container.appendChild(empty);
    return;
  }
  if (state.boardStale) {
    const badge = doc.createElement("div");
    badge.className = "stale-badge";
    badge.textContent = "model changed - refreshing";
    container.appendChild(badge);
  }

  const byClass = new Map<number, PrototypeCard[]>();
  for (const card of state.board.prototypes) {
    const group = byClass.get(card.class) ?? [];
    group.push(card);
    byClass.set(card.class, group);
  }

  for (const cls of [...byClass.keys()].sort((a, b) => a - b)) {
    const section = doc.createElement("section");
    section.className = "class-group";
    const heading = doc.createElement("h3");
    heading.textContent = `class ${cls}`;
    section.appendChild(heading);
    const grid = doc.createElement("div");
    grid.className = "card-grid";
    for (const card of byClass.get(cls)!) {
      grid.appendChild(renderCard(doc, card, state, handlers));
    }
    section.appendChild(grid);
    container.appendChild(section);
  }
}

function renderCard(
  doc: Document,
  card: PrototypeCard,
  state: AppState,
  handlers: BoardHandlers,
): HTMLElement {
  const el = doc.createElement("article");
  el.className = "proto-card";
  if (state.boardStale) el.classList.add("stale");
  if (state.selectedPrototype === card.id) el.classList.add("selected");
  el.dataset.id = String(card.id);

  const head = doc.createElement("header");
  const title = doc.createElement("span");
  title.className = "card-title";
  title.textContent = `P${card.id}`;
  head.appendChild(title);
  if (card.frozen) {
    const lock = doc.createElement("span");
    lock.className = "lock-glyph";
    lock.title = "frozen: receives no gradient, rejects edits";
    lock.textContent = "\u{1F512}";
    head.appendChild(lock);
  }
  const weight = doc.createElement("span");
  weight.className = "card-weight";
  // head_weight straight from the payload; the UI does no model math
  weight.textContent = `w = ${card.head_weight.toFixed(2)}`;
  head.appendChild(weight);
  el.appendChild(head);

  const text = doc.createElement("p");
  text.className = "card-text";
  text.textContent = card.display_text ?? "(latent prototype, not yet decoded)";
  el.appendChild(text);

  const footer = doc.createElement("footer");
  if (card.source_id) {
    const src = doc.createElement("span");
    src.className = "card-source";
    src.textContent = `from ${card.source_id}`;
    footer.appendChild(src);
  }
  const freezeBtn = doc.createElement("button");
  freezeBtn.className = "freeze-toggle";
  freezeBtn.textContent = card.frozen ? "unfreeze" : "freeze";
  freezeBtn.addEventListener("click", (ev) => {
    ev.stopPropagation();
    handlers.onToggleFreeze(card);
  });
  footer.appendChild(freezeBtn);
  el.appendChild(footer);

  el.addEventListener("click", () => handlers.onSelect(card.id));
  return el;
}
