// @vitest-environment happy-dom
// @vitest-environment-options {"url": "http://127.0.0.1:8971"}
//
// Drives the real page against the live, synchronously grading service
// started by the global setup. No fetch stubs: requests go over HTTP.

import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { beforeEach, expect, test } from 'vitest';

import { App } from '../src/app.js';
import { byTestId, fillAndSubmit, panelStatus, text, waitFor } from './helpers.js';

const here = dirname(fileURLToPath(import.meta.url));

function fixture(name: string): Uint8Array {
  return new Uint8Array(readFileSync(join(here, '.tmp', name)));
}

interface Page {
  app: App;
  root: HTMLElement;
  downloads: Array<{ blob: Blob; filename: string }>;
}

let page: Page;

beforeEach(() => {
  document.body.innerHTML = '';
  const root = document.createElement('main');
  document.body.appendChild(root);
  const downloads: Array<{ blob: Blob; filename: string }> = [];
  const app = new App(root, {
    pollIntervalMs: 50,
    downloadSink: (blob, filename) => downloads.push({ blob, filename }),
  });
  app.mount();
  page = { app, root, downloads };
});

async function settleInto(status: string): Promise<void> {
  await waitFor(() => panelStatus(page.root) === status, {
    label: `status ${status}, got ${panelStatus(page.root)}`,
  });
}

test('upload, download and resubmit complete the remedial loop', async () => {
  const { root, downloads } = page;

  fillAndSubmit(root, { email: 'ada@uni.example', exercise: '8', bytes: fixture('sheet.odt') });
  await settleInto('ready');

  expect(text(root, 'total')).toBe('Total: 3 / 4 (75%)');
  expect(byTestId(root, 'block-row')?.textContent).toContain('8.1a');
  const firstSession = text(root, 'session-id');
  expect(firstSession.length).toBeGreaterThan(10);

  byTestId(root, 'download')!.click();
  await waitFor(() => downloads.length === 1, { label: 'download to land' });
  const bytes = new Uint8Array(await downloads[0].blob.arrayBuffer());
  expect(Array.from(bytes.slice(0, 2))).toEqual([0x50, 0x4b]);
  expect(downloads[0].filename).toBe('feedback.odt');
  expect(byTestId(root, 'download')).toBeNull();

  byTestId(root, 'resubmit')!.click();
  expect(panelStatus(root)).toBe('idle');
  expect((root.querySelector('input[name=exercise]') as HTMLInputElement).value).toBe('8');

  fillAndSubmit(root, { bytes: fixture('revised.odt'), name: 'revised.odt' });
  await settleInto('ready');

  expect(text(root, 'total')).toBe('Total: 4 / 4 (100%)');
  const secondSession = text(root, 'session-id');
  expect(secondSession).not.toBe(firstSession);
}, 30000);

test('a document with a dangling marker renders the 422 verbatim', async () => {
  const { root } = page;

  fillAndSubmit(root, { email: 'ada@uni.example', exercise: '8', bytes: fixture('broken.odt') });
  await settleInto('failed');

  expect(text(root, 'error-name')).toBe('UnmatchedStartMarker');
  expect(text(root, 'error-message')).toContain('8.1b');
  expect(text(root, 'error-answer-id')).toContain('8.1b');
  expect(byTestId(root, 'retry')).toBeNull();
});

test('an unregistered address is turned away without retry', async () => {
  const { root } = page;

  fillAndSubmit(root, { email: 'mallory@uni.example', exercise: '8', bytes: fixture('sheet.odt') });
  await settleInto('failed');

  expect(text(root, 'error-name')).toBe('Not registered');
  expect(byTestId(root, 'retry')).toBeNull();
});

test('a purged session expires on the next download attempt', async () => {
  const { root } = page;

  fillAndSubmit(root, { email: 'ada@uni.example', exercise: '8', bytes: fixture('sheet.odt') });
  await settleInto('ready');
  const sessionId = text(root, 'session-id');

  const res = await fetch(`/sessions/${sessionId}`, { method: 'DELETE' });
  expect(res.status).toBe(200);

  byTestId(root, 'download')!.click();
  await settleInto('expired');

  byTestId(root, 'start-over')!.click();
  expect(panelStatus(root)).toBe('idle');
});
