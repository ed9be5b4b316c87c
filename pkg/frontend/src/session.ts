// Client-side intervention state: the expert's clamp map, the latest
// server response, and an append-only history of every (clamps, response)
// round-trip. One request in flight at a time; a failed submit leaves the
// session exactly as it was.

import { ApiClient, ClampRequest, PredictionResponse } from './api';

export interface HistoryEntry {
  clamps: Record<number, number>;
  hintText: string | null;
  response: PredictionResponse;
}

export interface ClassDelta {
  index: number;
  name: string;
  prob: number;
  delta: number;
}

function clampsToRequests(clamps: Record<number, number>): ClampRequest[] {
  return Object.entries(clamps).map(([k, v]) => ({
    concept_index: Number(k),
    value: v,
  }));
}

export class InterventionSession {
  readonly sampleId: string;
  baseline: PredictionResponse | null = null;
  latest: PredictionResponse | null = null;
  private readonly historyEntries: HistoryEntry[] = [];
  private clamps: Record<number, number> = {};
  private inFlight = false;

  constructor(
    private readonly api: ApiClient,
    sampleId: string,
  ) {
    this.sampleId = sampleId;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  // history is append-only: expose a read-only view
  get history(): readonly HistoryEntry[] {
    return this.historyEntries;
  }

  currentClamps(): Record<number, number> {
    return { ...this.clamps };
  }

  setClamp(index: number, value: number): void {
    if (value !== 0 && value !== 1) {
      throw new Error(`clamp value must be 0 or 1, got ${value}`);
    }
    this.clamps[index] = value;
  }

  releaseClamp(index: number): void {
    delete this.clamps[index];
  }

  releaseAll(): void {
    this.clamps = {};
  }

  /** Initial un-clamped prediction; also the "vs baseline" reference. */
  async start(): Promise<PredictionResponse> {
    if (this.inFlight) throw new Error('request already in flight');
    this.inFlight = true;
    try {
      const response = await this.api.predict(this.sampleId);
      this.baseline = response;
      this.latest = response;
      this.historyEntries.push({ clamps: {}, hintText: null, response });
      return response;
    } finally {
      this.inFlight = false;
    }
  }

  /** POST the current clamps (and optional hint); append to history.
   *  On any failure the clamp map, latest, and history are untouched. */
  async submit(hintText?: string): Promise<PredictionResponse> {
    if (this.inFlight) throw new Error('request already in flight');
    if (!this.baseline) throw new Error('session not started');
    this.inFlight = true;
    try {
      const response = await this.api.intervene(
        this.sampleId,
        clampsToRequests(this.clamps),
        hintText,
      );
      this.latest = response;
      this.historyEntries.push({
        clamps: { ...this.clamps },
        hintText: hintText ?? null,
        response,
      });
      return response;
    } finally {
      this.inFlight = false;
    }
  }

  /** Re-POST a stored history entry; the server being stateless, the
   *  result must equal the stored response. Does not touch the map. */
  async replay(entryIndex: number): Promise<PredictionResponse> {
    const entry = this.historyEntries[entryIndex];
    if (!entry) throw new Error(`no history entry ${entryIndex}`);
    if (this.inFlight) throw new Error('request already in flight');
    this.inFlight = true;
    try {
      return await this.api.intervene(
        this.sampleId,
        clampsToRequests(entry.clamps),
        entry.hintText ?? undefined,
      );
    } finally {
      this.inFlight = false;
    }
  }

  /** Per-class probability movement of the latest response, against the
   *  previous response (the iterative loop) or against the baseline. */
  deltas(vsBaseline: boolean): ClassDelta[] {
    if (!this.latest) return [];
    const reference = vsBaseline
      ? this.baseline
      : (this.historyEntries[this.historyEntries.length - 2]?.response ??
        this.baseline);
    return this.latest.class_probs.map((cp) => {
      const before = reference?.class_probs.find((r) => r.index === cp.index);
      return {
        index: cp.index,
        name: cp.name,
        prob: cp.prob,
        delta: before ? cp.prob - before.prob : 0,
      };
    });
  }
}
