// Feedback form: build a typed command from the controls, refuse to submit
// until it validates against the command schema, and show the gateway's
// before/after verdict plus the prototype diff afterwards.

import { validateCommand } from "./schema.js";
import type { AppState } from "./state.js";
import type { CommandBody, FeedbackOp } from "./types.js";

export interface FeedbackHandlers {
  onSubmit(command: CommandBody): void;
}

const OP_CHOICES: FeedbackOp[] = [
  "soft_replace",
  "replace",
  "add",
  "remove",
  "reinit",
  "finetune",
  "prune",
];

export interface FeedbackControls {
  readCommand(): CommandBody;
  setTarget(id: number): void;
}

export function renderFeedbackForm(
  container: HTMLElement,
  handlers: FeedbackHandlers,
): FeedbackControls {
  const doc = container.ownerDocument;
  container.textContent = "";

  const form = doc.createElement("form");
  form.className = "feedback-form";

  const opSelect = doc.createElement("select");
  opSelect.id = "fb-op";
  for (const op of OP_CHOICES) {
    const option = doc.createElement("option");
    option.value = op;
    option.textContent = op.replace("_", " ");
    opSelect.appendChild(option);
  }
  form.appendChild(labeled(doc, "operation", opSelect));

  const target = doc.createElement("input");
  target.id = "fb-target";
  target.type = "number";
  target.min = "0";
  form.appendChild(labeled(doc, "target prototype", target));

  const exampleId = doc.createElement("input");
  exampleId.id = "fb-example";
  exampleId.placeholder = "example id, e.g. e7";
  form.appendChild(labeled(doc, "payload example", exampleId));

  const text = doc.createElement("input");
  text.id = "fb-text";
  text.placeholder = "or replacement text";
  form.appendChild(labeled(doc, "payload text", text));

  const cls = doc.createElement("input");
  cls.id = "fb-class";
  cls.type = "number";
  cls.min = "0";
  form.appendChild(labeled(doc, "class (add by text)", cls));

  const certainty = doc.createElement("input");
  certainty.id = "fb-certainty";
  certainty.type = "range";
  certainty.min = "0";
  certainty.max = "1";
  certainty.step = "0.05";
  certainty.value = "0.5";
  const certaintyValue = doc.createElement("span");
  certaintyValue.id = "fb-certainty-value";
  certaintyValue.textContent = "0.50";
  certainty.addEventListener("input", () => {
    certaintyValue.textContent = Number(certainty.value).toFixed(2);
    refresh();
  });
  const certaintyWrap = labeled(doc, "certainty", certainty);
  certaintyWrap.appendChild(certaintyValue);
  form.appendChild(certaintyWrap);

  const threshold = doc.createElement("input");
  threshold.id = "fb-threshold";
  threshold.type = "number";
  threshold.min = "0";
  threshold.max = "1";
  threshold.step = "0.05";
  threshold.value = "0.8";
  form.appendChild(labeled(doc, "prune threshold", threshold));

  const problem = doc.createElement("p");
  problem.id = "fb-problem";
  problem.className = "muted";
  form.appendChild(problem);

  const submit = doc.createElement("button");
  submit.id = "fb-submit";
  submit.type = "submit";
  submit.textContent = "send feedback";
  form.appendChild(submit);

  const readCommand = (): CommandBody => {
    const op = opSelect.value as FeedbackOp;
    const body: CommandBody = { op };
    if (target.value !== "") body.target = Number(target.value);
    if (exampleId.value.trim()) body.example_id = exampleId.value.trim();
    if (text.value.trim()) body.text = text.value.trim();
    if (op === "soft_replace") body.certainty = Number(certainty.value);
    if (op === "prune") body.prune_threshold = Number(threshold.value);
    if (op === "add" && cls.value !== "") body.class = Number(cls.value);
    return body;
  };

  const refresh = () => {
    const error = validateCommand(readCommand());
    submit.disabled = error !== null;
    problem.textContent = error ?? "";
  };
  for (const el of [opSelect, target, exampleId, text, cls, threshold]) {
    el.addEventListener("input", refresh);
    el.addEventListener("change", refresh);
  }
  refresh();

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const command = readCommand();
    if (validateCommand(command) === null) handlers.onSubmit(command);
  });

  container.appendChild(form);
  return {
    readCommand,
    setTarget(id: number) {
      target.value = String(id);
      refresh();
    },
  };
}

function labeled(doc: Document, caption: string, control: HTMLElement): HTMLElement {
  const wrap = doc.createElement("label");
  wrap.className = "field";
  const span = doc.createElement("span");
  span.textContent = caption;
  wrap.appendChild(span);
  wrap.appendChild(control);
  return wrap;
}

export function renderOutcome(container: HTMLElement, state: AppState): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  if (state.outcomeError) {
    const err = doc.createElement("p");
    err.className = "inline-error";
    err.textContent = state.outcomeError;
    container.appendChild(err);
    return;
  }
  const outcome = state.outcome;
  if (!outcome) return;

  const headline = doc.createElement("p");
  headline.id = "outcome-headline";
  headline.className = outcome.accepted ? "accepted" : "rejected";
  headline.textContent = `${outcome.op}: ${outcome.accepted ? "accepted" : "rejected"} - ${outcome.message}`;
  container.appendChild(headline);

  const accs = doc.createElement("p");
  accs.id = "outcome-acc";
  const fmt = (v: number | null) => (v === null ? "n/a" : (100 * v).toFixed(2));
  accs.textContent =
    `balanced val accuracy: ${fmt(outcome.before.val_acc)} -> ${fmt(outcome.after.val_acc)}` +
    (outcome.retrain_epochs_used ? ` (head retrained ${outcome.retrain_epochs_used} epochs)` : "");
  container.appendChild(accs);

  if (state.diff) {
    const changed = diffCards(state);
    const diffEl = doc.createElement("ul");
    diffEl.id = "outcome-diff";
    for (const line of changed) {
      const li = doc.createElement("li");
      li.textContent = line;
      diffEl.appendChild(li);
    }
    if (!changed.length) {
      const li = doc.createElement("li");
      li.textContent = "prototype set unchanged";
      diffEl.appendChild(li);
    }
    container.appendChild(diffEl);
  }
}

function diffCards(state: AppState): string[] {
  const { before, after } = state.diff!;
  const lines: string[] = [];
  const textOf = (cards: typeof before, id: number) =>
    cards.find((c) => c.id === id)?.display_text ?? null;
  const beforeIds = new Set(before.map((c) => c.id));
  const afterIds = new Set(after.map((c) => c.id));
  for (const card of before) {
    if (!afterIds.has(card.id)) lines.push(`removed P${card.id}: ${card.display_text ?? "(latent)"}`);
  }
  for (const card of after) {
    if (!beforeIds.has(card.id)) {
      lines.push(`added P${card.id}: ${card.display_text ?? "(latent)"}`);
    } else if (textOf(before, card.id) !== card.display_text) {
      lines.push(
        `P${card.id}: "${textOf(before, card.id) ?? "(latent)"}" -> "${card.display_text ?? "(latent)"}"`,
      );
    }
  }
  return lines;
}
