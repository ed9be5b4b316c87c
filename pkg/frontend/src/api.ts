// Typed client for the /api/v1 inference service. The UI never computes
// model math; every displayed number originates from these payloads.

export interface ConceptScore {
  index: number;
  name: string;
  score: number;
}

export interface ClampEntry {
  index: number;
  name: string;
  value: number;
  source: string;
}

export interface ClassProb {
  index: number;
  name: string;
  prob: number;
}

export interface PredictionResponse {
  schema_version: number;
  sample_id: string;
  model_version: string;
  task: string;
  concept_scores: ConceptScore[];
  clamped: ClampEntry[];
  class_probs: ClassProb[];
}

export interface ConceptInfo {
  index: number;
  name: string;
  relevance?: number;
}

export interface SampleInfo {
  id: string;
  split: string;
  n_views: number;
  has_annotations: boolean;
  has_hint: boolean;
}

export interface HealthInfo {
  status: string;
  schema_version: number;
  model_version: string;
  task: string;
  n_concepts: number;
  n_classes: number;
}

export interface ClampRequest {
  concept_index?: number;
  concept_name?: string;
  value: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;

  // fetchFn is injectable so tests can run without a server
  constructor(
    baseUrl: string,
    private readonly fetchFn: FetchLike = (...a) => fetch(...a),
  ) {
    this.base = baseUrl.replace(/\/+$/, '');
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.base}/api/v1${path}`, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>('/health');
  }

  async concepts(): Promise<ConceptInfo[]> {
    const doc = await this.request<{ concepts: ConceptInfo[] }>('/concepts');
    return doc.concepts;
  }

  async samples(): Promise<SampleInfo[]> {
    const doc = await this.request<{ samples: SampleInfo[] }>('/samples');
    return doc.samples;
  }

  predict(sampleId: string): Promise<PredictionResponse> {
    return this.request<PredictionResponse>('/predict', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ sample_id: sampleId }),
    });
  }

  intervene(
    sampleId: string,
    clamps: ClampRequest[],
    hintText?: string,
  ): Promise<PredictionResponse> {
    const body: Record<string, unknown> = {
      sample_id: sampleId,
      clamps,
    };
    if (hintText) body.hint_text = hintText;
    return this.request<PredictionResponse>('/intervene', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }
}
