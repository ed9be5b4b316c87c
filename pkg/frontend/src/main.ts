// Page wiring: sample picker, concept panel, class probabilities with
// movement indicators, hint box, and the append-only history strip.

import { ApiClient, ApiError, SampleInfo } from './api';
import { ConceptPanel } from './conceptPanel';
import { InterventionSession } from './session';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function serviceUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('service');
  return fromQuery ?? 'http://127.0.0.1:8008';
}

const api = new ApiClient(serviceUrl());
let session: InterventionSession | null = null;
let panel: ConceptPanel | null = null;

function showError(message: string | null): void {
  const banner = el<HTMLDivElement>('error-banner');
  banner.textContent = message ?? '';
  banner.style.display = message ? 'block' : 'none';
}

function setBusy(busy: boolean): void {
  el<HTMLButtonElement>('submit-btn').disabled = busy;
  el<HTMLButtonElement>('release-all-btn').disabled = busy;
  el<HTMLSelectElement>('sample-select').disabled = busy;
  panel?.setDisabled(busy);
}

function renderProbs(): void {
  if (!session?.latest) return;
  const vsBaseline = el<HTMLInputElement>('vs-baseline').checked;
  const list = el<HTMLDivElement>('class-probs');
  list.innerHTML = '';
  for (const d of session.deltas(vsBaseline)) {
    const row = document.createElement('div');
    row.className = 'prob-row';
    const arrow = d.delta > 0 ? '▲' : d.delta < 0 ? '▼' : '—';
    const cls = d.delta > 0 ? 'up' : d.delta < 0 ? 'down' : 'flat';
    row.innerHTML =
      `<span class="prob-name">${d.name}</span>` +
      `<span class="prob-value">${d.prob.toFixed(4)}</span>` +
      `<span class="prob-delta ${cls}">${arrow} ${Math.abs(d.delta).toFixed(4)}</span>`;
    list.appendChild(row);
  }
}

function renderHistory(): void {
  if (!session) return;
  const list = el<HTMLDivElement>('history');
  list.innerHTML = '';
  session.history.forEach((entry, i) => {
    const row = document.createElement('div');
    row.className = 'history-row';
    const clampText =
      Object.entries(entry.clamps)
        .map(([k, v]) => `#${k}=${v}`)
        .join(' ') || 'no clamps';
    const label = document.createElement('span');
    label.textContent = `${i}: ${clampText}${entry.hintText ? ` hint="${entry.hintText}"` : ''}`;
    const replay = document.createElement('button');
    replay.textContent = 'replay';
    replay.addEventListener('click', async () => {
      if (!session || session.busy) return;
      setBusy(true);
      try {
        const again = await session.replay(i);
        const same =
          JSON.stringify(again) === JSON.stringify(entry.response);
        showError(same ? null : `replay of entry ${i} diverged from stored response`);
      } catch (err) {
        showError(err instanceof ApiError ? err.message : String(err));
      } finally {
        setBusy(false);
      }
    });
    row.append(label, replay);
    list.appendChild(row);
  });
}

function renderAll(): void {
  if (!session) return;
  panel?.render(session.latest);
  renderProbs();
  renderHistory();
  el<HTMLSpanElement>('model-version').textContent =
    session.latest?.model_version ?? '';
}

async function submit(): Promise<void> {
  if (!session || session.busy) return;
  setBusy(true);
  try {
    await session.submit(
      el<HTMLInputElement>('hint-input').value.trim() || undefined,
    );
    showError(null);
  } catch (err) {
    // session state is preserved on failure; just surface the message
    showError(err instanceof ApiError ? err.message : String(err));
  } finally {
    setBusy(false);
    renderAll();
  }
}

async function openSample(sampleId: string): Promise<void> {
  session = new InterventionSession(api, sampleId);
  const host = el<HTMLDivElement>('concept-panel');
  host.innerHTML = '';
  panel = new ConceptPanel(host, {
    onClamp: (index, value) => {
      if (!session) return;
      if (value === null) session.releaseClamp(index);
      else session.setClamp(index, value);
      void submit();
    },
  });
  setBusy(true);
  try {
    await session.start();
    showError(null);
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  } finally {
    setBusy(false);
    renderAll();
  }
}

async function boot(): Promise<void> {
  try {
    const health = await api.health();
    el<HTMLSpanElement>('service-info').textContent =
      `${health.task} · ${health.n_concepts} concepts · ${health.n_classes} classes`;
    const samples: SampleInfo[] = await api.samples();
    const select = el<HTMLSelectElement>('sample-select');
    for (const s of samples) {
      const opt = document.createElement('option');
      opt.value = s.id;
      opt.textContent = `${s.id} (${s.split}, ${s.n_views} view${s.n_views > 1 ? 's' : ''})`;
      select.appendChild(opt);
    }
    select.addEventListener('change', () => void openSample(select.value));
    el<HTMLButtonElement>('submit-btn').addEventListener('click', () =>
      void submit(),
    );
    el<HTMLButtonElement>('release-all-btn').addEventListener('click', () => {
      session?.releaseAll();
      void submit();
    });
    el<HTMLInputElement>('vs-baseline').addEventListener('change', () =>
      renderProbs(),
    );
    if (samples.length > 0) {
      select.value = samples[0].id;
      await openSample(samples[0].id);
    }
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

void boot();
