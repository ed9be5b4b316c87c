// Shared fakes: canned responses and a recording fetch stub.

import { ClampEntry, ClassProb, ConceptScore, PredictionResponse } from '../src/api';

export function makeResponse(
  overrides: Partial<PredictionResponse> = {},
): PredictionResponse {
  return {
    schema_version: 1,
    sample_id: 's0',
    model_version: 'abc123',
    task: 'single_label',
    concept_scores: [
      { index: 0, name: 'edema', score: 0.9 },
      { index: 1, name: 'mass', score: 0.2 },
    ],
    clamped: [],
    class_probs: [
      { index: 0, name: 'healthy', prob: 0.7 },
      { index: 1, name: 'sick', prob: 0.3 },
    ],
    ...overrides,
  };
}

export function scores(pairs: [string, number][]): ConceptScore[] {
  return pairs.map(([name, score], index) => ({ index, name, score }));
}

export function probs(pairs: [string, number][]): ClassProb[] {
  return pairs.map(([name, prob], index) => ({ index, name, prob }));
}

export function clampEntry(
  index: number,
  name: string,
  value: number,
  source = 'user',
): ClampEntry {
  return { index, name, value, source };
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

type Handler = (call: RecordedCall) => { status: number; body: unknown } | Promise<{ status: number; body: unknown }>;

/** A fetch substitute that records every call and answers via `handler`. */
export function fakeFetch(handler: Handler) {
  const calls: RecordedCall[] = [];
  const fn = async (url: string, init?: RequestInit): Promise<Response> => {
    const call: RecordedCall = {
      url,
      method: init?.method ?? 'GET',
      body: init?.body ? JSON.parse(String(init.body)) : null,
    };
    calls.push(call);
    const { status, body } = await handler(call);
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => body,
    } as unknown as Response;
  };
  return { fn, calls };
}

/** fetch substitute that always rejects, as an unreachable host would. */
export function deadFetch() {
  return async (): Promise<Response> => {
    throw new TypeError('connect ECONNREFUSED');
  };
}
