// End-to-end against a live service. Gated on MSGT_E2E_URL so the unit
// suite stays hermetic; scripts/run_e2e.sh starts the server and sets it.

import { request } from 'node:http';
import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api';
import { ConceptPanel } from '../src/conceptPanel';
import { InterventionSession } from '../src/session';

const baseUrl = process.env.MSGT_E2E_URL;
const live = baseUrl ? describe : describe.skip;

let requestCount = 0;

// raw node:http adapter: the test environment's DOM fetch is not wired
// to real sockets, and the client only needs ok/status/json()
function httpFetch(url: string, init?: RequestInit): Promise<Response> {
  requestCount += 1;
  return new Promise((resolve, reject) => {
    const req = request(
      url,
      {
        method: init?.method ?? 'GET',
        headers: (init?.headers as Record<string, string>) ?? {},
      },
      (res) => {
        const chunks: Buffer[] = [];
        res.on('data', (c: Buffer) => chunks.push(c));
        res.on('end', () => {
          const text = Buffer.concat(chunks).toString('utf8');
          const status = res.statusCode ?? 0;
          resolve({
            ok: status >= 200 && status < 300,
            status,
            json: async () => JSON.parse(text),
          } as unknown as Response);
        });
      },
    );
    req.on('error', reject);
    if (init?.body) req.write(init.body);
    req.end();
  });
}

live('intervention loop against the running service', () => {
  it('clamp to 1 updates displayed probabilities; release restores baseline', async () => {
    const api = new ApiClient(baseUrl as string, httpFetch);

    const health = await api.health();
    expect(health.status).toBe('ok');
    expect(health.n_concepts).toBeGreaterThan(0);

    // a sample with no annotations or hints keeps the baseline clamp-free
    const samples = await api.samples();
    const sample = samples.find((s) => !s.has_annotations && !s.has_hint);
    expect(sample).toBeDefined();

    const host = document.createElement('div');
    document.body.appendChild(host);
    const session = new InterventionSession(api, sample!.id);
    const panel = new ConceptPanel(host, { onClamp: () => {} });

    const baseline = await session.start();
    panel.render(session.latest);
    expect(baseline.clamped).toEqual([]);
    const shown = (probs: { prob: number }[]) =>
      probs.map((p) => p.prob.toFixed(4));
    const baselineShown = shown(baseline.class_probs);

    // clamp the weakest concept to 1: one submit, one HTTP round-trip
    const weakest = [...baseline.concept_scores].sort(
      (a, b) => a.score - b.score,
    )[0];
    session.setClamp(weakest.index, 1);
    const before = requestCount;
    const clamped = await session.submit();
    expect(requestCount - before).toBe(1);
    panel.render(session.latest);

    const row = host.querySelector<HTMLElement>(
      `.concept-row[data-concept-index="${weakest.index}"]`,
    );
    expect(row?.querySelector('.concept-score')?.textContent).toBe('1.00');
    expect(row?.querySelector('.clamp-mark')?.textContent).toBe('clamped 1');
    expect(clamped.clamped).toEqual([
      {
        index: weakest.index,
        name: weakest.name,
        value: 1,
        source: 'user',
      },
    ]);
    expect(shown(clamped.class_probs)).not.toEqual(baselineShown);

    // releasing the clamp must reproduce the baseline payload exactly
    session.releaseClamp(weakest.index);
    const released = await session.submit();
    expect(released).toEqual(baseline);
    panel.render(session.latest);
    expect(
      host.querySelector(
        `.concept-row[data-concept-index="${weakest.index}"] .clamp-mark`,
      ),
    ).toBeNull();
    expect(session.history.map((h) => h.clamps)).toEqual([
      {},
      { [weakest.index]: 1 },
      {},
    ]);
  }, 30000);
});
