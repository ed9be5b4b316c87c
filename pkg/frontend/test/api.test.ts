import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api';
import { deadFetch, fakeFetch, makeResponse } from './helpers';

describe('ApiClient urls and bodies', () => {
  it('prefixes /api/v1 and strips trailing slashes from the base', async () => {
    const { fn, calls } = fakeFetch(() => ({
      status: 200,
      body: {
        status: 'ok', schema_version: 1, model_version: 'v',
        task: 'single_label', n_concepts: 2, n_classes: 2,
      },
    }));
    const api = new ApiClient('http://host:1234///', fn);
    await api.health();
    expect(calls[0].url).toBe('http://host:1234/api/v1/health');
    expect(calls[0].method).toBe('GET');
  });

  it('posts the sample id on predict', async () => {
    const { fn, calls } = fakeFetch(() => ({ status: 200, body: makeResponse() }));
    const api = new ApiClient('http://h', fn);
    const res = await api.predict('tr3');
    expect(calls[0].url).toBe('http://h/api/v1/predict');
    expect(calls[0].method).toBe('POST');
    expect(calls[0].body).toEqual({ sample_id: 'tr3' });
    expect(res.sample_id).toBe('s0');
  });

  it('sends clamps and only includes hint_text when given', async () => {
    const { fn, calls } = fakeFetch(() => ({ status: 200, body: makeResponse() }));
    const api = new ApiClient('http://h', fn);
    await api.intervene('s0', [{ concept_index: 3, value: 1 }]);
    expect(calls[0].body).toEqual({
      sample_id: 's0',
      clamps: [{ concept_index: 3, value: 1 }],
    });
    await api.intervene('s0', [], 'looks like effusion');
    expect(calls[1].body).toEqual({
      sample_id: 's0',
      clamps: [],
      hint_text: 'looks like effusion',
    });
  });

  it('unwraps the concepts and samples envelopes', async () => {
    const { fn } = fakeFetch((call) =>
      call.url.endsWith('/concepts')
        ? { status: 200, body: { concepts: [{ index: 0, name: 'edema' }] } }
        : {
            status: 200,
            body: {
              samples: [{
                id: 'tr0', split: 'train', n_views: 2,
                has_annotations: true, has_hint: false,
              }],
            },
          },
    );
    const api = new ApiClient('http://h', fn);
    expect(await api.concepts()).toEqual([{ index: 0, name: 'edema' }]);
    expect((await api.samples())[0].id).toBe('tr0');
  });
});

describe('ApiClient errors', () => {
  it('surfaces the JSON detail field with the HTTP status', async () => {
    const { fn } = fakeFetch(() => ({
      status: 404,
      body: { detail: 'unknown sample_id' },
    }));
    const api = new ApiClient('http://h', fn);
    const err = await api.predict('nope').catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toBe('unknown sample_id');
  });

  it('falls back to the status code when the body is not JSON', async () => {
    const fn = async () =>
      ({
        ok: false,
        status: 502,
        json: async () => {
          throw new SyntaxError('not json');
        },
      }) as unknown as Response;
    const api = new ApiClient('http://h', fn);
    const err = await api.health().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(502);
    expect(err.message).toBe('HTTP 502');
  });

  it('maps network failure to status 0', async () => {
    const api = new ApiClient('http://h', deadFetch());
    const err = await api.health().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
    expect(err.message).toContain('unreachable');
  });
});
