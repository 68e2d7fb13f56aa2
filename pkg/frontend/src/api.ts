// Typed client for the grading service. The UI talks to these endpoints and
// nothing else; scores come from the status payload, never from parsing the
// document on the client.

export interface PerBlockScore {
  answer_id: string;
  awarded_points: number;
  max_points: number;
  attempts: number;
  ungraded_reason?: string;
}

export interface ScoreSummary {
  exercise_id: number;
  total_awarded: number;
  total_max: number;
  score_percent: number;
  per_block: PerBlockScore[];
}

export interface ServiceError {
  error: string;
  message: string;
  answer_id?: string;
}

export type UploadOutcome =
  | { kind: 'ready'; sessionId: string; downloadToken: string; score: ScoreSummary }
  | { kind: 'grading'; sessionId: string; downloadToken: string }
  | { kind: 'rejected'; httpStatus: number; detail: ServiceError };

export type StatusOutcome =
  | { kind: 'grading' }
  | { kind: 'ready'; score: ScoreSummary; downloadAvailable: boolean }
  | { kind: 'failed'; detail: ServiceError }
  | { kind: 'gone' }
  | { kind: 'rejected'; httpStatus: number; detail: ServiceError };

export type DownloadOutcome =
  | { kind: 'document'; blob: Blob }
  | { kind: 'rejected'; httpStatus: number; detail: ServiceError };

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

const NETWORK_DOWN = 0;

async function errorDetail(res: Response): Promise<ServiceError> {
  let body: unknown;
  try {
    body = await res.json();
  } catch {
    return { error: `HTTP ${res.status}`, message: res.statusText || 'request failed' };
  }
  if (body && typeof body === 'object') {
    const record = body as Record<string, unknown>;
    if (typeof record.error === 'string' && typeof record.message === 'string') {
      const detail: ServiceError = { error: record.error, message: record.message };
      if (typeof record.answer_id === 'string') {
        detail.answer_id = record.answer_id;
      }
      return detail;
    }
    // Framework-level validation errors arrive as {"detail": ...}.
    if ('detail' in record) {
      return { error: `HTTP ${res.status}`, message: JSON.stringify(record.detail) };
    }
  }
  return { error: `HTTP ${res.status}`, message: JSON.stringify(body) };
}

function networkError(err: unknown): ServiceError {
  return { error: 'NetworkError', message: err instanceof Error ? err.message : String(err) };
}

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async upload(email: string, exerciseId: number, file: File): Promise<UploadOutcome> {
    const form = new FormData();
    form.append('email', email);
    form.append('exercise_id', String(exerciseId));
    form.append('document', file, file.name || 'submission.odt');
    let res: Response;
    try {
      res = await this.fetchFn('/submissions', { method: 'POST', body: form });
    } catch (err) {
      return { kind: 'rejected', httpStatus: NETWORK_DOWN, detail: networkError(err) };
    }
    if (res.status === 200) {
      const body = await res.json();
      return {
        kind: 'ready',
        sessionId: body.session_id,
        downloadToken: body.download_token,
        score: body.score as ScoreSummary,
      };
    }
    if (res.status === 202) {
      const body = await res.json();
      return { kind: 'grading', sessionId: body.session_id, downloadToken: body.download_token };
    }
    return { kind: 'rejected', httpStatus: res.status, detail: await errorDetail(res) };
  }

  async status(sessionId: string): Promise<StatusOutcome> {
    let res: Response;
    try {
      res = await this.fetchFn(`/submissions/${encodeURIComponent(sessionId)}/status`);
    } catch (err) {
      return { kind: 'rejected', httpStatus: NETWORK_DOWN, detail: networkError(err) };
    }
    if (res.status === 404) {
      return { kind: 'gone' };
    }
    if (res.status !== 200) {
      return { kind: 'rejected', httpStatus: res.status, detail: await errorDetail(res) };
    }
    const body = await res.json();
    if (body.status === 'ready') {
      return {
        kind: 'ready',
        score: body.score as ScoreSummary,
        downloadAvailable: Boolean(body.download_available),
      };
    }
    if (body.status === 'failed') {
      const detail = body.error ?? { error: 'GradingFailed', message: 'grading failed' };
      return { kind: 'failed', detail: detail as ServiceError };
    }
    return { kind: 'grading' };
  }

  async download(sessionId: string, token: string): Promise<DownloadOutcome> {
    const url =
      `/submissions/${encodeURIComponent(sessionId)}/feedback?token=${encodeURIComponent(token)}`;
    let res: Response;
    try {
      res = await this.fetchFn(url);
    } catch (err) {
      return { kind: 'rejected', httpStatus: NETWORK_DOWN, detail: networkError(err) };
    }
    if (res.status !== 200) {
      return { kind: 'rejected', httpStatus: res.status, detail: await errorDetail(res) };
    }
    return { kind: 'document', blob: await res.blob() };
  }
}
