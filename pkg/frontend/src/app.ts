// Playground wiring: state transitions, service calls, and re-rendering.
// At most one inpaint request is in flight; newer clicks cancel older ones.

import { ServiceClient } from "./api.js";
import type { InpaintRequest, ModelInfo } from "./api.js";
import {
  addSlot,
  buildRequest,
  canRun,
  clearSlot,
  emptyDraft,
  reorderRows,
  RunHistory,
  setCell,
  toggleEnsemble,
  type EnsembleMember,
  type PromptDraft,
} from "./state.js";
import {
  renderAttentionOverlay,
  renderComparePanel,
  renderEditor,
  renderPreview,
  renderResult,
} from "./render.js";

export interface AppElements {
  editor: HTMLElement;
  preview: HTMLElement;
  result: HTMLElement;
  compare: HTMLElement;
  attention: HTMLElement;
  status: HTMLElement;
}

export function fileToBase64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      resolve(url.slice(url.indexOf(",") + 1));
    };
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
}

export class PlaygroundApp {
  draft: PromptDraft = emptyDraft();
  history = new RunHistory();
  models: ModelInfo[] = [];
  private inflight: AbortController | null = null;
  private lastCompleted: { request: InpaintRequest; completed: string } | null = null;

  constructor(
    private client: ServiceClient,
    private el: AppElements,
  ) {}

  async start(): Promise<void> {
    this.models = await this.client.models();
    if (this.models.length > 0) {
      this.draft = { ...this.draft, modelId: this.models[0].id };
    }
    this.render();
  }

  private setStatus(text: string): void {
    this.el.status.textContent = text;
  }

  private update(draft: PromptDraft): void {
    this.draft = draft;
    this.render();
    void this.refreshPreview();
  }

  render(): void {
    renderEditor(this.el.editor, this.draft, this.models, {
      onUpload: (i, side, file) => void this.handleUpload(i, side, file),
      onUploadQuery: (file) => void this.handleQueryUpload(file),
      onClear: (i) => this.update(clearSlot(this.draft, i)),
      onAddSlot: () => this.update(addSlot(this.draft)),
      onMove: (from, to) => this.update(reorderRows(this.draft, from, to)),
      onOrientation: (value) => this.update({ ...this.draft, orientation: value }),
      onPalette: (value) => this.update({ ...this.draft, palette: value }),
      onToggleEnsemble: (member) =>
        this.update(toggleEnsemble(this.draft, member as EnsembleMember)),
      onModel: (id) => this.update({ ...this.draft, modelId: id }),
      onRun: () => void this.runInpaint(),
    });
    renderComparePanel(this.el.compare, this.history.all());
    const latest = this.history.all().at(-1) ?? null;
    renderResult(this.el.result, latest, this.draft.patchSize, {
      onPatchClick: (row, col) => void this.showAttention(row, col),
      onScoreUpload: (file, metric) => void this.scoreLatest(file, metric),
    });
  }

  private async handleUpload(i: number, side: "input" | "output", file: File) {
    const b64 = await fileToBase64(file);
    this.update(setCell(this.draft, i, side, b64));
  }

  private async handleQueryUpload(file: File) {
    const b64 = await fileToBase64(file);
    this.update({ ...this.draft, query: b64 });
  }

  async refreshPreview(): Promise<void> {
    if (!canRun({ ...this.draft, modelId: this.draft.modelId ?? "preview" })) {
      renderPreview(this.el.preview, null);
      return;
    }
    try {
      const req = buildRequest(this.draft);
      const resp = await this.client.compose({
        examples: req.examples,
        query: req.query,
        layout: req.layout,
        palette: req.palette,
        canvas_size: req.canvas_size,
        patch_size: req.patch_size,
      });
      renderPreview(this.el.preview, resp.canvas);
    } catch (err) {
      this.setStatus(`compose failed: ${(err as Error).message}`);
    }
  }

  async runInpaint(): Promise<number | null> {
    if (!canRun(this.draft)) return null;
    if (this.inflight) this.inflight.abort(); // latest wins
    const controller = new AbortController();
    this.inflight = controller;
    const request = buildRequest(this.draft);
    this.setStatus("inpainting...");
    try {
      const resp = await this.client.inpaint(request, controller.signal);
      if (controller.signal.aborted) return null;
      this.history.add({
        config: request,
        completed: resp.completed,
        answer: resp.answer,
        latencyMs: resp.latency_ms,
        startedAt: Date.now(),
      });
      this.lastCompleted = { request, completed: resp.completed };
      this.setStatus(`done in ${resp.latency_ms.toFixed(1)} ms`);
      this.render();
      return this.history.length - 1;
    } catch (err) {
      if (!controller.signal.aborted) {
        this.setStatus(`inpaint failed: ${(err as Error).message}`);
      }
      return null;
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  async showAttention(row: number, col: number): Promise<void> {
    if (!this.lastCompleted) return;
    const req = this.lastCompleted.request;
    try {
      const resp = await this.client.attention({
        model_id: req.model_id,
        examples: req.examples,
        query: req.query,
        layout: req.layout,
        palette: req.palette,
        canvas_size: req.canvas_size,
        patch_size: req.patch_size,
        patch_row: row,
        patch_col: col,
      });
      renderAttentionOverlay(this.el.attention, resp.heatmap, this.draft.patchSize);
      this.setStatus(`attention for patch (${row}, ${col})`);
    } catch (err) {
      this.setStatus(`attention failed: ${(err as Error).message}`);
    }
  }

  async scoreLatest(file: File, metric: string): Promise<void> {
    const latest = this.history.all().at(-1);
    if (!latest) return;
    const gt = await fileToBase64(file);
    try {
      const resp = await this.client.score({
        prediction: latest.answer,
        ground_truth: gt,
        metric,
      });
      const badge = this.el.result.querySelector("#score-badge");
      if (badge) badge.textContent = `${metric}: ${resp.score.toFixed(4)}`;
    } catch (err) {
      this.setStatus(`score failed: ${(err as Error).message}`);
    }
  }
}

export function mount(root: Document, baseUrl = ""): PlaygroundApp {
  const el: AppElements = {
    editor: root.getElementById("editor") as HTMLElement,
    preview: root.getElementById("preview") as HTMLElement,
    result: root.getElementById("result") as HTMLElement,
    compare: root.getElementById("compare") as HTMLElement,
    attention: root.getElementById("attention") as HTMLElement,
    status: root.getElementById("status") as HTMLElement,
  };
  const app = new PlaygroundApp(new ServiceClient(baseUrl), el);
  void app.start();
  return app;
}
