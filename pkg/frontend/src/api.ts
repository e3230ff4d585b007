/** Typed client for the review service's /api endpoints. */

export interface SceneGraphNode {
  object_name: string;
  attributes: Record<string, string>;
}

export interface SceneGraphEdge {
  subject: string;
  predicate: string;
  object: string;
}

export interface SceneGraph {
  nodes: SceneGraphNode[];
  relationships: SceneGraphEdge[];
}

export interface GroundTruth {
  classification: "hazardous" | "non-hazardous";
  hazards_count: number;
  existing_hazards: string[];
}

export interface Progress {
  done: number;
  total: number;
}

export interface TripleBundle {
  key: string;
  scenario_id: string;
  replicate_index: number;
  subject: string | null;
  description: string | null;
  topic: string | null;
  image_url: string;
  scene_graph: SceneGraph;
  ground_truth: GroundTruth;
  judge_verdict: string;
  human_verdicts: { annotator_id: string; aligned: boolean; timestamp: number }[];
  progress?: Progress;
}

export interface QueueDone {
  done: true;
  progress: Progress;
}

export type QueueResponse = TripleBundle | QueueDone;

export interface SubmitResult {
  stored: boolean;
  key: string;
  history_length: number;
}

export interface PairStats {
  annotators: string[];
  shared_items: number;
  kappa: number | null;
}

export interface StatsResponse {
  total: number;
  annotators: Record<string, { completed: number }>;
  pairs: PairStats[];
}

export function isDone(response: QueueResponse): response is QueueDone {
  return (response as QueueDone).done === true;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail = body as { error?: string; field?: string };
      throw new ApiError(response.status, detail.error ?? response.statusText, detail.field);
    }
    return body as T;
  }

  queue(annotator: string): Promise<QueueResponse> {
    return this.request(`/api/queue?annotator=${encodeURIComponent(annotator)}`);
  }

  triple(key: string): Promise<TripleBundle> {
    return this.request(`/api/triples/${encodeURIComponent(key)}`);
  }

  submit(annotator: string, key: string, aligned: boolean, reason?: string): Promise<SubmitResult> {
    return this.request("/api/annotations", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotator_id: annotator, key, aligned, reason: reason ?? null }),
    });
  }

  stats(): Promise<StatsResponse> {
    return this.request("/api/stats");
  }
}
