// Virtualized concept list: score bars with clamp controls. Rows are
// sorted by score descending (name breaks ties), and only the visible
// window plus a small buffer exists in the DOM, so thousand-concept
// pools stay responsive.

import { PredictionResponse } from './api';

export interface ConceptRow {
  index: number;
  name: string;
  score: number;
  clampValue: number | null;
  source: string | null;
}

export interface ConceptPanelOptions {
  rowHeight?: number;
  height?: number;
  buffer?: number;
  onClamp: (conceptIndex: number, value: 0 | 1 | null) => void;
}

export function buildRows(response: PredictionResponse): ConceptRow[] {
  const clampBy = new Map(response.clamped.map((c) => [c.index, c]));
  const rows = response.concept_scores.map((c) => ({
    index: c.index,
    name: c.name,
    score: c.score,
    clampValue: clampBy.get(c.index)?.value ?? null,
    source: clampBy.get(c.index)?.source ?? null,
  }));
  rows.sort((a, b) => b.score - a.score || a.name.localeCompare(b.name));
  return rows;
}

export class ConceptPanel {
  private readonly viewport: HTMLElement;
  private readonly spacer: HTMLElement;
  private readonly rowHeight: number;
  private readonly height: number;
  private readonly buffer: number;
  private rows: ConceptRow[] = [];
  private disabled = false;

  constructor(
    container: HTMLElement,
    private readonly options: ConceptPanelOptions,
  ) {
    this.rowHeight = options.rowHeight ?? 28;
    this.height = options.height ?? 420;
    this.buffer = options.buffer ?? 4;
    this.viewport = document.createElement('div');
    this.viewport.className = 'concept-viewport';
    this.viewport.style.position = 'relative';
    this.viewport.style.overflowY = 'auto';
    this.viewport.style.height = `${this.height}px`;
    this.spacer = document.createElement('div');
    this.spacer.className = 'concept-spacer';
    this.viewport.appendChild(this.spacer);
    container.appendChild(this.viewport);
    this.viewport.addEventListener('scroll', () => this.redraw());
  }

  render(response: PredictionResponse | null): void {
    this.rows = response ? buildRows(response) : [];
    this.redraw();
  }

  setDisabled(disabled: boolean): void {
    this.disabled = disabled;
    this.redraw();
  }

  /** Rows currently materialized in the DOM (test hook). */
  domRowCount(): number {
    return this.viewport.querySelectorAll('.concept-row').length;
  }

  private redraw(): void {
    for (const el of Array.from(
      this.viewport.querySelectorAll('.concept-row, .concept-empty'),
    )) {
      el.remove();
    }
    if (this.rows.length === 0) {
      this.spacer.style.height = '0px';
      const empty = document.createElement('div');
      empty.className = 'concept-empty';
      empty.textContent = 'no concepts in the pool';
      this.viewport.appendChild(empty);
      return;
    }
    this.spacer.style.height = `${this.rows.length * this.rowHeight}px`;
    const scrollTop = this.viewport.scrollTop;
    const first = Math.max(
      0,
      Math.floor(scrollTop / this.rowHeight) - this.buffer,
    );
    const last = Math.min(
      this.rows.length,
      Math.ceil((scrollTop + this.height) / this.rowHeight) + this.buffer,
    );
    for (let i = first; i < last; i++) {
      this.viewport.appendChild(this.buildRow(this.rows[i], i));
    }
  }

  private buildRow(row: ConceptRow, position: number): HTMLElement {
    const el = document.createElement('div');
    el.className = 'concept-row' + (row.clampValue !== null ? ' clamped' : '');
    el.dataset.conceptIndex = String(row.index);
    el.style.position = 'absolute';
    el.style.top = `${position * this.rowHeight}px`;
    el.style.height = `${this.rowHeight}px`;
    el.style.left = '0';
    el.style.right = '0';

    const name = document.createElement('span');
    name.className = 'concept-name';
    name.textContent = row.name;

    const bar = document.createElement('div');
    bar.className = 'score-bar';
    const fill = document.createElement('div');
    fill.className = 'score-fill';
    fill.style.width = `${Math.round(row.score * 100)}%`;
    bar.appendChild(fill);

    const score = document.createElement('span');
    score.className = 'concept-score';
    score.textContent = row.score.toFixed(2);

    el.append(name, bar, score);

    if (row.clampValue !== null) {
      const mark = document.createElement('span');
      mark.className = 'clamp-mark';
      mark.textContent = `clamped ${row.clampValue === 1 ? '1' : '0'}${
        row.source && row.source !== 'user' ? ` (${row.source})` : ''
      }`;
      el.appendChild(mark);
    }

    for (const [label, value, cls] of [
      ['1', 1, 'clamp-one'],
      ['0', 0, 'clamp-zero'],
      ['release', null, 'clamp-release'],
    ] as const) {
      const btn = document.createElement('button');
      btn.className = cls;
      btn.textContent = label;
      btn.disabled =
        this.disabled || (value === null && row.clampValue === null);
      btn.addEventListener('click', () =>
        this.options.onClamp(row.index, value),
      );
      el.appendChild(btn);
    }
    return el;
  }
}
