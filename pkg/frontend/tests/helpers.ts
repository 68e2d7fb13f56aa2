import { App, AppOptions, UiSubmissionView } from '../src/app.js';
import type { FetchLike } from '../src/api.js';

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export interface RecordedCall {
  url: string;
  method: string;
  init?: RequestInit;
}

/**
 * Queue-backed fetch stub: each call consumes the next queued item. A queued
 * Error is thrown (network failure), anything else is returned as-is.
 */
export class FakeBackend {
  calls: RecordedCall[] = [];
  private queue: Array<Response | Error | (() => Response)> = [];

  push(...items: Array<Response | Error | (() => Response)>): void {
    this.queue.push(...items);
  }

  fetch: FetchLike = async (url, init) => {
    this.calls.push({ url, method: init?.method ?? 'GET', init });
    const next = this.queue.shift();
    if (next === undefined) {
      throw new Error(`unexpected request: ${init?.method ?? 'GET'} ${url}`);
    }
    if (next instanceof Error) {
      throw next;
    }
    return typeof next === 'function' ? next() : next;
  };
}

export function recordingDelay(): { delays: number[]; delay: (ms: number) => Promise<void> } {
  const delays: number[] = [];
  return {
    delays,
    delay: (ms: number) => {
      delays.push(ms);
      return Promise.resolve();
    },
  };
}

export interface Harness {
  app: App;
  root: HTMLElement;
  backend: FakeBackend;
  views: UiSubmissionView[];
  delays: number[];
  downloads: Array<{ blob: Blob; filename: string }>;
}

export function mountApp(options: Partial<AppOptions> = {}): Harness {
  document.body.innerHTML = '';
  const root = document.createElement('main');
  document.body.appendChild(root);

  const backend = new FakeBackend();
  const views: UiSubmissionView[] = [];
  const downloads: Array<{ blob: Blob; filename: string }> = [];
  const { delays, delay } = recordingDelay();

  const app = new App(root, {
    fetchFn: backend.fetch,
    delay,
    downloadSink: (blob, filename) => downloads.push({ blob, filename }),
    onViewChange: (view) => views.push(view),
    ...options,
  });
  app.mount();
  return { app, root, backend, views, delays, downloads };
}

export function setFile(root: HTMLElement, bytes: Uint8Array | null, name = 'sheet.odt'): void {
  const input = root.querySelector('input[name=document]') as HTMLInputElement;
  if (bytes === null) {
    (input as unknown as { files: File[] }).files = [];
    return;
  }
  const file = new File([bytes], name, { type: 'application/vnd.oasis.opendocument.text' });
  (input as unknown as { files: File[] }).files = [file];
}

export function fillAndSubmit(
  root: HTMLElement,
  fields: { email?: string; exercise?: string; bytes?: Uint8Array | null; name?: string },
): void {
  const email = root.querySelector('input[name=email]') as HTMLInputElement;
  const exercise = root.querySelector('input[name=exercise]') as HTMLInputElement;
  if (fields.email !== undefined) {
    email.value = fields.email;
  }
  if (fields.exercise !== undefined) {
    exercise.value = fields.exercise;
  }
  if (fields.bytes !== undefined) {
    setFile(root, fields.bytes, fields.name);
  }
  (root.querySelector('[data-testid=upload]') as HTMLButtonElement).click();
}

export function text(root: HTMLElement, testId: string): string {
  const node = root.querySelector(`[data-testid=${testId}]`);
  return node?.textContent ?? '';
}

export function byTestId(root: HTMLElement, testId: string): HTMLElement | null {
  return root.querySelector(`[data-testid=${testId}]`);
}

export function panelStatus(root: HTMLElement): string {
  return (root.querySelector('[data-testid=status-panel]') as HTMLElement).dataset.status ?? '';
}

/** Every recorded view must keep scores out of non-ready states. */
export function assertScoreOnlyWhenReady(views: UiSubmissionView[]): void {
  for (const view of views) {
    if (view.score !== null && view.status !== 'ready') {
      throw new Error(`score leaked into status ${view.status}`);
    }
  }
}

export async function waitFor(
  predicate: () => boolean,
  { timeoutMs = 15000, stepMs = 25, label = 'condition' } = {},
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) {
      return;
    }
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
  throw new Error(`timed out waiting for ${label}`);
}

export const READY_SCORE = {
  exercise_id: 8,
  total_awarded: 3.0,
  total_max: 4.0,
  score_percent: 75.0,
  per_block: [{ answer_id: '8.1a', awarded_points: 3.0, max_points: 4.0, attempts: 1 }],
};

export function uploadAccepted(sessionId = 'sess-1', token = 'tok-1'): Response {
  return jsonResponse(200, {
    session_id: sessionId,
    download_token: token,
    status: 'ready',
    score: READY_SCORE,
  });
}

export function uploadQueued(sessionId = 'sess-1', token = 'tok-1'): Response {
  return jsonResponse(202, { session_id: sessionId, download_token: token, status: 'grading' });
}

export function statusGrading(sessionId = 'sess-1'): Response {
  return jsonResponse(200, { session_id: sessionId, status: 'grading' });
}

export function statusReady(sessionId = 'sess-1', downloadAvailable = true): Response {
  return jsonResponse(200, {
    session_id: sessionId,
    status: 'ready',
    score: READY_SCORE,
    download_available: downloadAvailable,
  });
}
