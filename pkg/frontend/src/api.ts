// Typed client for the prompt service. All model math happens server-side.

export interface ModelInfo {
  id: string;
  patch_size: number;
  vocab_size: number;
  codebook_dim: number;
  embed_dim: number;
  head: string;
}

export interface ExamplePayload {
  input: string; // base64 PNG
  output: string;
}

export interface LayoutSpec {
  orientation: "horizontal" | "vertical";
  row_order?: number[];
}

export interface ComposeRequest {
  examples: ExamplePayload[];
  query: string;
  layout: LayoutSpec;
  palette?: string;
  canvas_size?: number;
  patch_size?: number;
}

export interface CellMapJson {
  cells: Record<string, number[]>;
  answer_cell: number[];
  canvas_size: number;
  patch_size: number;
}

export interface ComposeResponse {
  api_version: string;
  canvas: string;
  mask: number[][];
  cell_map: CellMapJson;
}

export interface InpaintRequest extends ComposeRequest {
  model_id: string;
  ensemble?: string[];
}

export interface InpaintResponse {
  api_version: string;
  completed: string;
  answer: string;
  latency_ms: number;
}

export interface ScoreRequest {
  prediction: string;
  ground_truth: string;
  metric: string;
  target_color?: number[];
}

export interface AttentionRequest extends ComposeRequest {
  model_id: string;
  patch_row: number;
  patch_col: number;
}

export interface ApiError {
  code: string;
  message: string;
}

export class ServiceClient {
  constructor(private baseUrl: string = "") {}

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    const data = await resp.json();
    if (!resp.ok) {
      const err = data as ApiError;
      throw new Error(`${err.code}: ${err.message}`);
    }
    return data as T;
  }

  async models(): Promise<ModelInfo[]> {
    const resp = await fetch(this.baseUrl + "/models");
    const data = await resp.json();
    if (!resp.ok) throw new Error(`${data.code}: ${data.message}`);
    return data.models as ModelInfo[];
  }

  compose(req: ComposeRequest, signal?: AbortSignal): Promise<ComposeResponse> {
    return this.post<ComposeResponse>("/compose", req, signal);
  }

  inpaint(req: InpaintRequest, signal?: AbortSignal): Promise<InpaintResponse> {
    return this.post<InpaintResponse>("/inpaint", req, signal);
  }

  score(req: ScoreRequest): Promise<{ score: number; metric: string }> {
    return this.post<{ score: number; metric: string }>("/score", req);
  }

  // the service also accepts GET with a body, but browsers cannot send one
  attention(req: AttentionRequest): Promise<{ heatmap: number[][]; grid: number[] }> {
    return this.post<{ heatmap: number[][]; grid: number[] }>("/attention", req);
  }
}
