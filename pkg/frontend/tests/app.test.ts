// Scripted browser-style test of the prompt-engineering loop: upload a pair
// and a query, run inpaint, reorder rows, rerun, and check the compare panel
// records two distinct results with their configs.

import { beforeEach, describe, expect, it, vi } from "vitest";

import { mount, PlaygroundApp } from "../src/app.js";
import type { InpaintRequest } from "../src/api.js";
import { setCell, swapRows } from "../src/state.js";

const PNG_A = "QUFB";
const PNG_B = "QkJC";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

// deterministic fake service: the completion depends on the row order, so
// reordering rows genuinely changes the result
function fakeFetch(url: RequestInfo | URL, init?: RequestInit): Promise<Response> {
  const path = String(url);
  if (path.endsWith("/models")) {
    return Promise.resolve(
      jsonResponse({
        api_version: "1",
        models: [{ id: "tiny", patch_size: 8, vocab_size: 16, codebook_dim: 8,
                   embed_dim: 32, head: "token_logits" }],
      }),
    );
  }
  const body = JSON.parse(String(init?.body ?? "{}")) as InpaintRequest;
  if (path.endsWith("/compose")) {
    return Promise.resolve(
      jsonResponse({ api_version: "1", canvas: "Y2FudmFz", mask: [[1]],
                     cell_map: { cells: {}, answer_cell: [1, 1], canvas_size: 128,
                                 patch_size: 8 } }),
    );
  }
  if (path.endsWith("/inpaint")) {
    const tag = `order-${(body.layout.row_order ?? []).join("-")}`;
    return Promise.resolve(
      jsonResponse({
        api_version: "1",
        completed: btoa(`completed-${tag}`),
        answer: btoa(`answer-${tag}`),
        latency_ms: 12.5,
      }),
    );
  }
  if (path.endsWith("/score")) {
    return Promise.resolve(jsonResponse({ api_version: "1", metric: "miou", score: 1.0 }));
  }
  if (path.endsWith("/attention")) {
    return Promise.resolve(
      jsonResponse({ api_version: "1", heatmap: [[0.5, 0.5]], grid: [1, 2] }),
    );
  }
  return Promise.resolve(jsonResponse({ code: "not_found", message: path }, 404));
}

function setupDom(): void {
  document.body.innerHTML = `
    <div id="status"></div>
    <div id="editor"></div><div id="preview"></div>
    <div id="result"></div><div id="compare"></div><div id="attention"></div>`;
}

async function flush(): Promise<void> {
  await new Promise((r) => setTimeout(r, 0));
  await new Promise((r) => setTimeout(r, 0));
}

describe("playground loop", () => {
  let app: PlaygroundApp;

  beforeEach(async () => {
    vi.stubGlobal("fetch", vi.fn(fakeFetch));
    setupDom();
    app = mount(document);
    await flush();
  });

  it("uploads one example pair + query, runs, reorders rows, reruns, and the "
     + "compare panel shows two distinct results with configs", async () => {
    // upload one example pair + query (state-level upload: jsdom FileReader
    // is exercised separately below)
    app.draft = setCell(app.draft, 0, "input", PNG_A);
    app.draft = setCell(app.draft, 0, "output", PNG_B);
    app.draft = { ...app.draft, query: PNG_A };
    app.render();

    const runButton = document.getElementById("run-inpaint") as HTMLButtonElement;
    expect(runButton.disabled).toBe(false);

    await app.runInpaint();
    expect(app.history.length).toBe(1);

    // add a second pair so reordering rows changes the prompt
    app.draft = {
      ...app.draft,
      examples: [...app.draft.examples, { input: PNG_B, output: PNG_A }],
      rowOrder: [...app.draft.rowOrder, 1],
    };
    await app.runInpaint();
    app.draft = swapRows(app.draft, 0, 1); // reorder example rows
    await app.runInpaint();

    const items = document.querySelectorAll("#compare .compare-item");
    expect(items.length).toBe(3);
    const last = items[2];
    const prev = items[1];
    const lastImg = (last.querySelector(".compare-answer") as HTMLImageElement).src;
    const prevImg = (prev.querySelector(".compare-answer") as HTMLImageElement).src;
    expect(lastImg).not.toBe(prevImg); // two distinct results after the reorder
    const lastCfg = JSON.parse(last.querySelector(".compare-config")!.textContent!);
    const prevCfg = JSON.parse(prev.querySelector(".compare-config")!.textContent!);
    expect(prevCfg.layout.row_order).toEqual([0, 1]);
    expect(lastCfg.layout.row_order).toEqual([1, 0]);
  });

  it("run button is disabled until a pair and query are present", async () => {
    const runButton = document.getElementById("run-inpaint") as HTMLButtonElement;
    expect(runButton.disabled).toBe(true);
    expect(await app.runInpaint()).toBeNull();
    expect(app.history.length).toBe(0);
  });

  it("ensemble toggles appear in the request payload", async () => {
    app.draft = setCell(app.draft, 0, "input", PNG_A);
    app.draft = setCell(app.draft, 0, "output", PNG_B);
    app.draft = { ...app.draft, query: PNG_A };
    app.render();
    (document.querySelector('input[data-member="horizontal"]') as HTMLInputElement).click();
    await flush();
    (document.querySelector('input[data-member="vertical"]') as HTMLInputElement).click();
    await flush();
    await app.runInpaint();
    const record = app.history.all()[0];
    expect(record.config.ensemble).toEqual(["horizontal", "vertical"]);
  });

  it("uploading ground truth equal to the answer shows a score badge of 1", async () => {
    app.draft = setCell(app.draft, 0, "input", PNG_A);
    app.draft = setCell(app.draft, 0, "output", PNG_B);
    app.draft = { ...app.draft, query: PNG_A };
    await app.runInpaint();
    app.render();
    const file = new File([Uint8Array.from([1, 2, 3])], "gt.png", { type: "image/png" });
    await app.scoreLatest(file, "miou");
    const badge = document.getElementById("score-badge");
    expect(badge?.textContent).toBe("miou: 1.0000");
  });

  it("clicking the completed canvas fetches an attention overlay", async () => {
    app.draft = setCell(app.draft, 0, "input", PNG_A);
    app.draft = setCell(app.draft, 0, "output", PNG_B);
    app.draft = { ...app.draft, query: PNG_A };
    await app.runInpaint();
    await app.showAttention(9, 9);
    const overlay = document.getElementById("attention-overlay");
    expect(overlay).not.toBeNull();
    expect(document.getElementById("status")?.textContent).toContain("(9, 9)");
  });

  it("renders the live preview from /compose after edits", async () => {
    app.draft = setCell(app.draft, 0, "input", PNG_A);
    app.draft = setCell(app.draft, 0, "output", PNG_B);
    app.draft = { ...app.draft, query: PNG_A };
    await app.refreshPreview();
    const preview = document.getElementById("compose-preview") as HTMLImageElement;
    expect(preview.src).toContain("data:image/png;base64,");
  });
});
