// Client-side mirror of the gateway's command schema. The form refuses to
// submit anything this validator rejects, so every emitted command is valid
// against the server by construction (and the test suite sweeps all
// reachable control combinations through it).

import type { CommandBody } from "./types.js";

export const OPS = [
  "remove",
  "add",
  "replace",
  "reinit",
  "finetune",
  "prune",
  "soft_replace",
  "freeze",
  "unfreeze",
] as const;

const NEEDS_PAYLOAD = new Set(["add", "replace", "soft_replace"]);
const ALLOWED_KEYS = new Set([
  "op",
  "target",
  "example_id",
  "text",
  "certainty",
  "prune_threshold",
  "class",
]);

export function validateCommand(body: CommandBody): string | null {
  if (!OPS.includes(body.op)) return `unknown op ${body.op}`;
  for (const key of Object.keys(body)) {
    if (!ALLOWED_KEYS.has(key)) return `unknown field ${key}`;
  }
  if (body.op !== "add" && (body.target === undefined || body.target === null)) {
    return "this op needs a target prototype";
  }
  if (NEEDS_PAYLOAD.has(body.op) && !body.example_id && !body.text) {
    return "this op needs a payload: an example id or replacement text";
  }
  if (body.op === "soft_replace") {
    if (body.certainty === undefined) return "soft replace needs a certainty";
    if (body.certainty < 0 || body.certainty > 1) return "certainty must be in [0, 1]";
  }
  if (body.op === "add" && !body.example_id && body.class === undefined) {
    return "adding by text needs a class";
  }
  if (
    body.prune_threshold !== undefined &&
    (body.prune_threshold < 0 || body.prune_threshold > 1)
  ) {
    return "prune threshold must be in [0, 1]";
  }
  return null;
}
