// DOM construction helpers. The whole UI re-renders from state; handlers are
// injected so render stays free of app logic.

import type { RunRecord } from "./state.js";
import type { PromptDraft } from "./state.js";
import { canRun, ENSEMBLE_MEMBERS } from "./state.js";
import type { ModelInfo } from "./api.js";

export function pngUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

export interface EditorHandlers {
  onUpload(index: number, side: "input" | "output", file: File): void;
  onUploadQuery(file: File): void;
  onClear(index: number): void;
  onAddSlot(): void;
  onMove(from: number, to: number): void;
  onOrientation(value: "horizontal" | "vertical"): void;
  onPalette(value: string | null): void;
  onToggleEnsemble(member: string): void;
  onModel(id: string): void;
  onRun(): void;
}

function fileInput(onFile: (f: File) => void, label: string): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "upload";
  wrap.textContent = label;
  const input = document.createElement("input");
  input.type = "file";
  input.accept = "image/png";
  input.addEventListener("change", () => {
    if (input.files && input.files[0]) onFile(input.files[0]);
  });
  wrap.appendChild(input);
  return wrap;
}

function cellView(image: string | null, empty: string): HTMLElement {
  if (image) {
    const img = document.createElement("img");
    img.className = "cell";
    img.src = pngUrl(image);
    return img;
  }
  const div = document.createElement("div");
  div.className = "cell empty";
  div.textContent = empty;
  return div;
}

export function renderEditor(
  root: HTMLElement,
  draft: PromptDraft,
  models: ModelInfo[],
  handlers: EditorHandlers,
): void {
  root.replaceChildren();

  const grid = document.createElement("div");
  grid.className = "editor-grid";
  draft.rowOrder.forEach((exampleIdx, slot) => {
    const row = document.createElement("div");
    row.className = "editor-row";
    row.dataset.example = String(exampleIdx);
    const ex = draft.examples[exampleIdx];
    row.appendChild(cellView(ex.input, "input"));
    row.appendChild(cellView(ex.output, "output"));
    row.appendChild(fileInput((f) => handlers.onUpload(exampleIdx, "input", f), "set input"));
    row.appendChild(fileInput((f) => handlers.onUpload(exampleIdx, "output", f), "set output"));

    const up = document.createElement("button");
    up.textContent = "move up";
    up.className = "move-up";
    up.disabled = slot === 0;
    up.addEventListener("click", () => handlers.onMove(slot, slot - 1));
    const down = document.createElement("button");
    down.textContent = "move down";
    down.className = "move-down";
    down.disabled = slot === draft.rowOrder.length - 1;
    down.addEventListener("click", () => handlers.onMove(slot, slot + 1));
    const clear = document.createElement("button");
    clear.textContent = "clear";
    clear.className = "clear-row";
    clear.addEventListener("click", () => handlers.onClear(exampleIdx));
    row.append(up, down, clear);
    grid.appendChild(row);
  });

  const queryRow = document.createElement("div");
  queryRow.className = "editor-row query-row";
  queryRow.appendChild(cellView(draft.query, "query"));
  const hole = document.createElement("div");
  hole.className = "cell hole";
  hole.textContent = "?";
  queryRow.appendChild(hole);
  queryRow.appendChild(fileInput((f) => handlers.onUploadQuery(f), "set query"));
  grid.appendChild(queryRow);
  root.appendChild(grid);

  const controls = document.createElement("div");
  controls.className = "controls";

  const add = document.createElement("button");
  add.id = "add-slot";
  add.textContent = "add example";
  add.addEventListener("click", handlers.onAddSlot);
  controls.appendChild(add);

  const orient = document.createElement("select");
  orient.id = "orientation";
  for (const o of ["horizontal", "vertical"]) {
    const opt = document.createElement("option");
    opt.value = o;
    opt.textContent = o;
    opt.selected = draft.orientation === o;
    orient.appendChild(opt);
  }
  orient.addEventListener("change", () =>
    handlers.onOrientation(orient.value as "horizontal" | "vertical"),
  );
  controls.appendChild(orient);

  const palette = document.createElement("select");
  palette.id = "palette";
  for (const p of ["(as uploaded)", "black_white", "purple_yellow", "green_red"]) {
    const opt = document.createElement("option");
    opt.value = p;
    opt.textContent = p;
    opt.selected = (draft.palette ?? "(as uploaded)") === p;
    palette.appendChild(opt);
  }
  palette.addEventListener("change", () =>
    handlers.onPalette(palette.value === "(as uploaded)" ? null : palette.value),
  );
  controls.appendChild(palette);

  for (const member of ENSEMBLE_MEMBERS) {
    const label = document.createElement("label");
    label.className = "ensemble-toggle";
    const box = document.createElement("input");
    box.type = "checkbox";
    box.dataset.member = member;
    box.checked = draft.ensemble[member];
    box.addEventListener("change", () => handlers.onToggleEnsemble(member));
    label.append(box, document.createTextNode(member));
    controls.appendChild(label);
  }

  const model = document.createElement("select");
  model.id = "model-select";
  for (const m of models) {
    const opt = document.createElement("option");
    opt.value = m.id;
    opt.textContent = `${m.id} (|V|=${m.vocab_size}, patch ${m.patch_size})`;
    opt.selected = draft.modelId === m.id;
    model.appendChild(opt);
  }
  model.addEventListener("change", () => handlers.onModel(model.value));
  controls.appendChild(model);

  const run = document.createElement("button");
  run.id = "run-inpaint";
  run.textContent = "run inpaint";
  run.disabled = !canRun(draft);
  run.addEventListener("click", handlers.onRun);
  controls.appendChild(run);

  root.appendChild(controls);
}

export function renderPreview(root: HTMLElement, canvas: string | null): void {
  root.replaceChildren();
  if (!canvas) return;
  const img = document.createElement("img");
  img.id = "compose-preview";
  img.src = pngUrl(canvas);
  root.appendChild(img);
}

export interface ResultHandlers {
  onPatchClick(row: number, col: number): void;
  onScoreUpload(file: File, metric: string): void;
}

export function renderResult(
  root: HTMLElement,
  record: RunRecord | null,
  patchSize: number,
  handlers: ResultHandlers,
): void {
  root.replaceChildren();
  if (!record) {
    const empty = document.createElement("p");
    empty.id = "result-empty";
    empty.textContent = "no runs yet";
    root.appendChild(empty);
    return;
  }
  const completed = document.createElement("img");
  completed.id = "result-completed";
  completed.src = pngUrl(record.completed);
  completed.addEventListener("click", (ev) => {
    // canvas renders at 2x zoom; map back to patch coordinates
    const rect = completed.getBoundingClientRect();
    const x = (ev.clientX - rect.left) / 2;
    const y = (ev.clientY - rect.top) / 2;
    handlers.onPatchClick(Math.floor(y / patchSize), Math.floor(x / patchSize));
  });
  const answer = document.createElement("img");
  answer.id = "result-answer";
  answer.src = pngUrl(record.answer);
  const latency = document.createElement("span");
  latency.id = "result-latency";
  latency.textContent = `${record.latencyMs.toFixed(1)} ms`;
  const config = document.createElement("pre");
  config.className = "run-config";
  config.textContent = JSON.stringify(configSummary(record), null, 1);
  root.append(completed, answer, latency, config);

  const scoreControls = document.createElement("div");
  const metric = document.createElement("select");
  metric.id = "score-metric";
  for (const m of ["miou", "mse", "color_aware_miou"]) {
    const opt = document.createElement("option");
    opt.value = m;
    opt.textContent = m;
    metric.appendChild(opt);
  }
  scoreControls.appendChild(metric);
  scoreControls.appendChild(
    fileInput((f) => handlers.onScoreUpload(f, metric.value), "upload ground truth"),
  );
  const badge = document.createElement("span");
  badge.id = "score-badge";
  scoreControls.appendChild(badge);
  root.appendChild(scoreControls);
}

function configSummary(record: RunRecord): Record<string, unknown> {
  const { model_id, layout, palette, ensemble, canvas_size, patch_size } = record.config;
  return {
    model_id,
    layout,
    palette: palette ?? null,
    ensemble: ensemble ?? null,
    canvas_size,
    patch_size,
    examples: record.config.examples.length,
  };
}

export function renderComparePanel(root: HTMLElement, records: RunRecord[]): void {
  root.replaceChildren();
  for (const [i, rec] of records.entries()) {
    const item = document.createElement("div");
    item.className = "compare-item";
    item.dataset.run = String(i);
    const answer = document.createElement("img");
    answer.className = "compare-answer";
    answer.src = pngUrl(rec.answer);
    const config = document.createElement("pre");
    config.className = "compare-config";
    config.textContent = JSON.stringify(configSummary(rec), null, 1);
    item.append(answer, config);
    root.appendChild(item);
  }
}

export function renderAttentionOverlay(
  root: HTMLElement,
  heatmap: number[][] | null,
  patchSize: number,
): void {
  root.replaceChildren();
  if (!heatmap) return;
  const rows = heatmap.length;
  const cols = heatmap[0].length;
  const canvas = document.createElement("canvas");
  canvas.id = "attention-overlay";
  canvas.width = cols * patchSize * 2;
  canvas.height = rows * patchSize * 2;
  const ctx = canvas.getContext("2d");
  if (ctx) {
    const peak = Math.max(...heatmap.map((r) => Math.max(...r)));
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < cols; c++) {
        const a = peak > 0 ? heatmap[r][c] / peak : 0;
        ctx.fillStyle = `rgba(255, 64, 0, ${(0.85 * a).toFixed(3)})`;
        ctx.fillRect(c * patchSize * 2, r * patchSize * 2, patchSize * 2, patchSize * 2);
      }
    }
  }
  root.appendChild(canvas);
}
