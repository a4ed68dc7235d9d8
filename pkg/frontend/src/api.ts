// Typed client for the session service. Every non-2xx response carries a
// {code, message} body which is surfaced verbatim; network failures become
// ConnectionError so the UI can show a retry banner without losing edits.

import type { EditJson, ModelJson, SessionSummary, SessionView } from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export class ConnectionError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
    this.name = 'ConnectionError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new ConnectionError(cause);
    }
    if (!response.ok) {
      let code = 'E-HTTP';
      let message = `${response.status}`;
      try {
        const data = (await response.json()) as { code?: string; message?: string };
        if (data.code) code = data.code;
        if (data.message) message = data.message;
      } catch {
        // keep the generic code when the body is not JSON
      }
      throw new ApiError(response.status, code, message);
    }
    return response;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.request(method, path, body);
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.json('GET', '/health');
  }

  createSession(title: string, text: string): Promise<SessionView> {
    return this.json('POST', '/sessions', { title, text });
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.json('GET', '/sessions');
  }

  getSession(id: string): Promise<SessionView> {
    return this.json('GET', `/sessions/${id}`);
  }

  runStage(
    id: string,
    stage: 'actors' | 'usecases' | 'model' | 'descriptions',
    usecaseIds?: string[],
  ): Promise<SessionView> {
    const body = stage === 'descriptions' ? { usecase_ids: usecaseIds ?? [] } : undefined;
    return this.json('POST', `/sessions/${id}/stages/${stage}/run`, body);
  }

  applyEdits(id: string, edits: EditJson[]): Promise<SessionView> {
    return this.json('POST', `/sessions/${id}/edits`, edits);
  }

  confirm(id: string): Promise<SessionView> {
    return this.json('POST', `/sessions/${id}/confirm`);
  }

  getModel(id: string): Promise<ModelJson> {
    return this.json('GET', `/sessions/${id}/model`);
  }

  async exportPuml(id: string): Promise<string> {
    const response = await this.request('GET', `/sessions/${id}/export?format=puml`);
    return await response.text();
  }

  exportJson(id: string): Promise<SessionView> {
    return this.json('GET', `/sessions/${id}/export?format=json`);
  }
}
