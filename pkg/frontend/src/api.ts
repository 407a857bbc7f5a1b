import type {
  QueueFilters,
  QueueItemSummary,
  QueueResponse,
  ReviewItemDetail,
  VerdictRequest,
} from './types';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the service's machine-readable code; 409 means conflict. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function raiseForError(response: Response): Promise<void> {
  if (response.ok) return;
  let code = 'error';
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { error?: { code?: string; message?: string } };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status message
  }
  throw new ApiError(response.status, code, message);
}

/** Thin typed client over the review HTTP API; fetch is injectable for tests. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  private url(path: string, params?: Record<string, string | number | undefined>): string {
    const url = new URL(path, this.baseUrl);
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value !== undefined) url.searchParams.set(key, String(value));
    }
    return url.toString();
  }

  async listQueue(filters: QueueFilters, page: number, pageSize: number): Promise<QueueResponse> {
    const response = await this.fetchFn(
      this.url('/review/queue', {
        status: filters.status,
        reason: filters.reason,
        round: filters.round,
        page,
        page_size: pageSize,
      }),
    );
    await raiseForError(response);
    return (await response.json()) as QueueResponse;
  }

  async getItem(itemId: string): Promise<ReviewItemDetail> {
    const response = await this.fetchFn(this.url(`/review/item/${encodeURIComponent(itemId)}`));
    await raiseForError(response);
    return (await response.json()) as ReviewItemDetail;
  }

  async submitVerdict(verdict: VerdictRequest): Promise<QueueItemSummary> {
    const response = await this.fetchFn(this.url('/review/verdict'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(verdict),
    });
    await raiseForError(response);
    const body = (await response.json()) as { item: QueueItemSummary };
    return body.item;
  }
}
