// Pure playground state: the prompt draft being edited and the run history.
// Every mutation returns a new draft so the UI re-renders from state alone.

import type { InpaintRequest, LayoutSpec } from "./api.js";

export interface ExampleSlot {
  input: string | null; // base64 PNG
  output: string | null;
}

export type EnsembleMember = "horizontal" | "vertical" | "vertical-rowswap";

export const ENSEMBLE_MEMBERS: EnsembleMember[] = [
  "horizontal",
  "vertical",
  "vertical-rowswap",
];

export interface PromptDraft {
  examples: ExampleSlot[];
  query: string | null;
  orientation: "horizontal" | "vertical";
  rowOrder: number[]; // permutation of example indices
  palette: string | null;
  ensemble: Record<EnsembleMember, boolean>;
  modelId: string | null;
  canvasSize: number;
  patchSize: number;
}

export interface RunRecord {
  config: InpaintRequest;
  completed: string;
  answer: string;
  latencyMs: number;
  startedAt: number;
}

export function emptyDraft(): PromptDraft {
  return {
    examples: [{ input: null, output: null }],
    query: null,
    orientation: "horizontal",
    rowOrder: [0],
    palette: null,
    ensemble: { horizontal: false, vertical: false, "vertical-rowswap": false },
    modelId: null,
    canvasSize: 128,
    patchSize: 8,
  };
}

export function completePairs(draft: PromptDraft): number[] {
  return draft.examples
    .map((slot, i) => (slot.input && slot.output ? i : -1))
    .filter((i) => i >= 0);
}

// run stays disabled until at least one complete pair and a query exist
export function canRun(draft: PromptDraft): boolean {
  return completePairs(draft).length >= 1 && draft.query !== null && draft.modelId !== null;
}

export function setCell(
  draft: PromptDraft,
  index: number,
  side: "input" | "output",
  image: string | null,
): PromptDraft {
  const examples = draft.examples.map((slot, i) =>
    i === index ? { ...slot, [side]: image } : slot,
  );
  return { ...draft, examples };
}

export function addSlot(draft: PromptDraft): PromptDraft {
  if (draft.examples.length >= 8) return draft; // grid capacity
  return {
    ...draft,
    examples: [...draft.examples, { input: null, output: null }],
    rowOrder: [...draft.rowOrder, draft.examples.length],
  };
}

export function clearSlot(draft: PromptDraft, index: number): PromptDraft {
  return setCell(setCell(draft, index, "input", null), index, "output", null);
}

export function removeSlot(draft: PromptDraft, index: number): PromptDraft {
  if (draft.examples.length <= 1) return clearSlot(draft, index);
  const examples = draft.examples.filter((_, i) => i !== index);
  const order = draft.rowOrder
    .filter((i) => i !== index)
    .map((i) => (i > index ? i - 1 : i));
  return { ...draft, examples, rowOrder: order };
}

// drag-reorder: move the row shown in slot `from` to slot `to`
export function reorderRows(draft: PromptDraft, from: number, to: number): PromptDraft {
  const order = [...draft.rowOrder];
  if (from < 0 || from >= order.length || to < 0 || to >= order.length) return draft;
  const [moved] = order.splice(from, 1);
  order.splice(to, 0, moved);
  return { ...draft, rowOrder: order };
}

export function swapRows(draft: PromptDraft, a: number, b: number): PromptDraft {
  const order = [...draft.rowOrder];
  if (a >= order.length || b >= order.length) return draft;
  [order[a], order[b]] = [order[b], order[a]];
  return { ...draft, rowOrder: order };
}

export function toggleEnsemble(draft: PromptDraft, member: EnsembleMember): PromptDraft {
  return { ...draft, ensemble: { ...draft.ensemble, [member]: !draft.ensemble[member] } };
}

export function ensembleList(draft: PromptDraft): string[] {
  return ENSEMBLE_MEMBERS.filter((m) => draft.ensemble[m]);
}

function layoutSpec(draft: PromptDraft, pairs: number[]): LayoutSpec {
  // row order restricted to the complete pairs, renumbered densely
  const rank = new Map(pairs.map((p, i) => [p, i]));
  const order = draft.rowOrder
    .filter((i) => rank.has(i))
    .map((i) => rank.get(i) as number);
  return { orientation: draft.orientation, row_order: order };
}

// the exact request payload, shown alongside results for reproducibility
export function buildRequest(draft: PromptDraft): InpaintRequest {
  const pairs = completePairs(draft);
  const req: InpaintRequest = {
    model_id: draft.modelId ?? "",
    examples: pairs.map((i) => ({
      input: draft.examples[i].input as string,
      output: draft.examples[i].output as string,
    })),
    query: draft.query ?? "",
    layout: layoutSpec(draft, pairs),
    canvas_size: draft.canvasSize,
    patch_size: draft.patchSize,
  };
  if (draft.palette) req.palette = draft.palette;
  const members = ensembleList(draft);
  if (members.length > 0) req.ensemble = members;
  return req;
}

export class RunHistory {
  private records: RunRecord[] = [];

  add(record: RunRecord): void {
    this.records.push(record);
  }

  all(): RunRecord[] {
    return [...this.records];
  }

  get length(): number {
    return this.records.length;
  }
}
