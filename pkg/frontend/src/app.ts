// Page controller for the submit / feedback / revise loop.
//
// One submission is active at a time. The page moves through
// idle -> uploading -> grading -> ready, with failed and expired as
// terminal detours, and "revise and resubmit" loops back to idle with the
// exercise number kept. Scores are rendered only in the ready state.

import {
  ApiClient,
  FetchLike,
  ScoreSummary,
  ServiceError,
  StatusOutcome,
} from './api.js';

export type UiStatus = 'idle' | 'uploading' | 'grading' | 'ready' | 'failed' | 'expired';

export interface UiError {
  httpStatus: number;
  detail: ServiceError;
}

export interface UiSubmissionView {
  sessionId: string | null;
  exerciseId: number | null;
  status: UiStatus;
  score: ScoreSummary | null;
  error: UiError | null;
  downloadAvailable: boolean;
  notice: string | null;
}

export type DownloadSink = (blob: Blob, filename: string) => void;

export interface AppOptions {
  fetchFn?: FetchLike;
  downloadSink?: DownloadSink;
  pollIntervalMs?: number;
  pollBackoffFactor?: number;
  pollIntervalCapMs?: number;
  delay?: (ms: number) => Promise<void>;
  onViewChange?: (view: UiSubmissionView) => void;
}

const STATUS_LINES: Record<UiStatus, string> = {
  idle: 'Pick your exercise document and upload it for feedback.',
  uploading: 'Uploading your document…',
  grading: 'Grading in progress…',
  ready: 'Feedback is ready.',
  failed: 'The submission was not graded.',
  expired: 'This session has expired. Your document and feedback were removed.',
};

// Provider-side failures are worth retrying with the same document;
// everything else needs a changed input first.
const RETRYABLE_ERRORS = new Set(['ProviderUnavailable', 'Timeout', 'QuotaExceeded', 'NetworkError']);

function defaultDelay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

// Hand the document to the browser's download machinery without keeping a
// reference: the object URL is revoked as soon as the click went through.
function anchorDownloadSink(blob: Blob, filename: string): void {
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement('a');
  anchor.href = url;
  anchor.download = filename;
  document.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}

function freshView(): UiSubmissionView {
  return {
    sessionId: null,
    exerciseId: null,
    status: 'idle',
    score: null,
    error: null,
    downloadAvailable: false,
    notice: null,
  };
}

function formatPoints(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(1);
}

export class App {
  private readonly api: ApiClient;
  private readonly sink: DownloadSink;
  private readonly pollIntervalMs: number;
  private readonly pollBackoffFactor: number;
  private readonly pollIntervalCapMs: number;
  private readonly delay: (ms: number) => Promise<void>;
  private readonly onViewChange: ((view: UiSubmissionView) => void) | null;

  private view: UiSubmissionView = freshView();
  private downloadToken: string | null = null;
  private lastUpload: { email: string; exerciseId: number; file: File } | null = null;
  private retryAction: (() => Promise<void>) | null = null;
  private generation = 0;
  private lastRun: Promise<void> = Promise.resolve();

  private form!: HTMLFormElement;
  private fields!: HTMLFieldSetElement;
  private panel!: HTMLElement;

  constructor(private readonly root: HTMLElement, options: AppOptions = {}) {
    this.api = new ApiClient(options.fetchFn);
    this.sink = options.downloadSink ?? anchorDownloadSink;
    this.pollIntervalMs = options.pollIntervalMs ?? 2000;
    this.pollBackoffFactor = options.pollBackoffFactor ?? 1.5;
    this.pollIntervalCapMs = options.pollIntervalCapMs ?? 10000;
    this.delay = options.delay ?? defaultDelay;
    this.onViewChange = options.onViewChange ?? null;
  }

  mount(): void {
    this.root.innerHTML = `
      <h1>Exercise feedback</h1>
      <form data-testid="submit-form" novalidate>
        <fieldset>
          <label>e-mail address
            <input name="email" type="email" autocomplete="email">
          </label>
          <label>exercise number
            <input name="exercise" type="number" min="1" step="1">
          </label>
          <label>exercise document (.odt)
            <input name="document" type="file" accept=".odt,application/vnd.oasis.opendocument.text">
          </label>
          <button type="submit" data-testid="upload">Upload for feedback</button>
          <p class="form-hint" data-testid="form-hint" hidden></p>
        </fieldset>
      </form>
      <section class="status-panel" data-testid="status-panel" data-status="idle"></section>
    `;
    this.form = this.root.querySelector('form') as HTMLFormElement;
    this.fields = this.form.querySelector('fieldset') as HTMLFieldSetElement;
    this.panel = this.root.querySelector('.status-panel') as HTMLElement;
    this.form.addEventListener('submit', (event) => {
      event.preventDefault();
      this.handleSubmit();
    });
    this.panel.addEventListener('click', (event) => {
      const target = event.target as HTMLElement;
      const action = target.dataset ? target.dataset.action : undefined;
      if (action === 'download') {
        this.lastRun = this.handleDownload();
      } else if (action === 'resubmit' || action === 'start-over') {
        this.handleReset();
      } else if (action === 'retry') {
        this.lastRun = this.handleRetry();
      }
    });
    this.render();
  }

  /** Snapshot of the current view, for tests and debugging. */
  viewSnapshot(): UiSubmissionView {
    return { ...this.view, score: this.view.score, error: this.view.error };
  }

  /** Resolves once the most recently started operation has settled. */
  settled(): Promise<void> {
    return this.lastRun;
  }

  private setView(patch: Partial<UiSubmissionView>): void {
    this.view = { ...this.view, ...patch };
    if (this.view.score !== null && this.view.status !== 'ready') {
      throw new Error('score must only be set in the ready state');
    }
    this.render();
  }

  private handleSubmit(): void {
    const email = (this.form.elements.namedItem('email') as HTMLInputElement).value.trim();
    const exerciseRaw = (this.form.elements.namedItem('exercise') as HTMLInputElement).value;
    const fileInput = this.form.elements.namedItem('document') as HTMLInputElement;
    const file = fileInput.files && fileInput.files.length > 0 ? fileInput.files[0] : null;

    const exerciseId = Number.parseInt(exerciseRaw, 10);
    let hint = '';
    if (!email) {
      hint = 'Enter the e-mail address you are registered with.';
    } else if (!Number.isInteger(exerciseId) || exerciseId < 1) {
      hint = 'Enter the exercise number printed on the sheet.';
    } else if (!file) {
      hint = 'Choose the exercise document to upload.';
    }
    this.showFormHint(hint);
    if (hint) {
      return;
    }
    this.lastRun = this.beginUpload(email, exerciseId, file as File);
  }

  private showFormHint(text: string): void {
    const node = this.form.querySelector('[data-testid=form-hint]') as HTMLElement;
    node.textContent = text;
    node.hidden = text === '';
  }

  private async beginUpload(email: string, exerciseId: number, file: File): Promise<void> {
    const generation = ++this.generation;
    this.lastUpload = { email, exerciseId, file };
    this.retryAction = null;
    this.downloadToken = null;
    this.setView({
      ...freshView(),
      exerciseId,
      status: 'uploading',
    });

    const outcome = await this.api.upload(email, exerciseId, file);
    if (generation !== this.generation) {
      return;
    }
    if (outcome.kind === 'ready') {
      this.downloadToken = outcome.downloadToken;
      this.setView({
        sessionId: outcome.sessionId,
        status: 'ready',
        score: outcome.score,
        downloadAvailable: true,
      });
      return;
    }
    if (outcome.kind === 'grading') {
      this.downloadToken = outcome.downloadToken;
      this.setView({ sessionId: outcome.sessionId, status: 'grading' });
      await this.pollUntilSettled(outcome.sessionId, generation);
      return;
    }
    this.applyRejection(outcome.httpStatus, outcome.detail, () =>
      this.beginUpload(email, exerciseId, file),
    );
  }

  private applyRejection(
    httpStatus: number,
    detail: ServiceError,
    retry: (() => Promise<void>) | null,
  ): void {
    const retryable = retry !== null && (RETRYABLE_ERRORS.has(detail.error) || httpStatus >= 500);
    this.retryAction = retryable ? retry : null;
    this.setView({ status: 'failed', score: null, error: { httpStatus, detail } });
  }

  private async pollUntilSettled(sessionId: string, generation: number): Promise<void> {
    let interval = this.pollIntervalMs;
    for (;;) {
      await this.delay(interval);
      interval = Math.min(interval * this.pollBackoffFactor, this.pollIntervalCapMs);
      if (generation !== this.generation) {
        return;
      }
      const outcome: StatusOutcome = await this.api.status(sessionId);
      if (generation !== this.generation) {
        return;
      }
      if (outcome.kind === 'grading') {
        continue;
      }
      if (outcome.kind === 'ready') {
        this.setView({ status: 'ready', score: outcome.score, downloadAvailable: outcome.downloadAvailable });
        return;
      }
      if (outcome.kind === 'gone') {
        this.setView({ status: 'expired', score: null });
        return;
      }
      if (outcome.kind === 'failed') {
        this.applyRejection(200, outcome.detail, null);
        return;
      }
      // Transient transport problem while polling: offer to resume.
      this.applyRejection(outcome.httpStatus, outcome.detail, async () => {
        const next = ++this.generation;
        this.setView({ status: 'grading', error: null });
        await this.pollUntilSettled(sessionId, next);
      });
      return;
    }
  }

  private async handleDownload(): Promise<void> {
    if (this.view.sessionId === null || this.downloadToken === null) {
      return;
    }
    const outcome = await this.api.download(this.view.sessionId, this.downloadToken);
    if (outcome.kind === 'document') {
      this.sink(outcome.blob, 'feedback.odt');
      this.setView({ downloadAvailable: false, notice: 'Feedback downloaded.' });
      return;
    }
    if (outcome.httpStatus === 404) {
      this.setView({ status: 'expired', score: null, downloadAvailable: false });
      return;
    }
    this.setView({ notice: `Download refused: ${outcome.detail.message}` });
  }

  private async handleRetry(): Promise<void> {
    const action = this.retryAction;
    if (action !== null) {
      this.retryAction = null;
      await action();
    }
  }

  private handleReset(): void {
    this.generation += 1;
    this.downloadToken = null;
    this.retryAction = null;
    const keptExercise = this.view.exerciseId;
    this.view = { ...freshView(), exerciseId: keptExercise };
    const fileInput = this.form.elements.namedItem('document') as HTMLInputElement;
    fileInput.value = '';
    try {
      (fileInput as { files: FileList | null }).files = null;
    } catch {
      // Some DOM implementations keep FileList read-only; the cleared value
      // is what the next submit reads through files.length anyway.
    }
    this.showFormHint('');
    this.render();
    fileInput.focus();
  }

  private render(): void {
    const { status } = this.view;
    const busy = status === 'uploading' || status === 'grading';
    this.fields.disabled = busy || status === 'ready';
    this.panel.dataset.status = status;
    this.panel.innerHTML = [
      `<p data-testid="status-line">${STATUS_LINES[status]}</p>`,
      this.renderScore(),
      this.renderError(),
      this.renderActions(),
      this.view.notice ? `<p data-testid="notice">${escapeHtml(this.view.notice)}</p>` : '',
      this.view.sessionId
        ? `<p class="session-footer">session <span data-testid="session-id">${escapeHtml(this.view.sessionId)}</span></p>`
        : '',
    ].join('');
    if (this.onViewChange) {
      this.onViewChange(this.viewSnapshot());
    }
  }

  private renderScore(): string {
    if (this.view.status !== 'ready' || this.view.score === null) {
      return '';
    }
    const score = this.view.score;
    const rows = score.per_block
      .map((block) => {
        const note = block.ungraded_reason
          ? ` <span data-testid="ungraded-reason">NOT GRADED: ${escapeHtml(block.ungraded_reason)}</span>`
          : '';
        return (
          `<tr data-testid="block-row" data-answer-id="${escapeHtml(block.answer_id)}">` +
          `<td>${escapeHtml(block.answer_id)}</td>` +
          `<td>${formatPoints(block.awarded_points)} / ${formatPoints(block.max_points)}${note}</td>` +
          '</tr>'
        );
      })
      .join('');
    return (
      '<div class="score">' +
      `<p data-testid="total">Total: ${formatPoints(score.total_awarded)} / ` +
      `${formatPoints(score.total_max)} (${score.score_percent}%)</p>` +
      `<table><tbody>${rows}</tbody></table>` +
      '</div>'
    );
  }

  private renderError(): string {
    if (this.view.status !== 'failed' || this.view.error === null) {
      return '';
    }
    const { httpStatus, detail } = this.view.error;
    const name =
      detail.error === 'NotRegistered'
        ? 'Not registered'
        : detail.error;
    const marker = detail.answer_id
      ? `<p data-testid="error-answer-id">answer block: ${escapeHtml(detail.answer_id)}</p>`
      : '';
    return (
      '<div class="error">' +
      `<p data-testid="error-name">${escapeHtml(name)}</p>` +
      `<p data-testid="error-message">${escapeHtml(detail.message)}</p>` +
      marker +
      (httpStatus > 0 ? `<p class="http-status">HTTP ${httpStatus}</p>` : '') +
      '</div>'
    );
  }

  private renderActions(): string {
    const actions: string[] = [];
    if (this.view.status === 'ready') {
      if (this.view.downloadAvailable) {
        actions.push('<button type="button" data-action="download" data-testid="download">Download feedback</button>');
      }
      actions.push(
        '<button type="button" data-action="resubmit" data-testid="resubmit">Revise and resubmit</button>',
      );
    }
    if (this.view.status === 'failed' && this.retryAction !== null) {
      actions.push('<button type="button" data-action="retry" data-testid="retry">Try again</button>');
    }
    if (this.view.status === 'expired') {
      actions.push(
        '<button type="button" data-action="start-over" data-testid="start-over">Start over</button>',
      );
    }
    return actions.length > 0 ? `<div class="actions">${actions.join('')}</div>` : '';
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}
