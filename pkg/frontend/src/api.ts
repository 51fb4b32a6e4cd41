// Thin typed client for the tutoring REST API. The fetch function is
// injectable so tests can script the server.

import type {
  CreateSessionResponse,
  PostMessageResponse,
  ProblemPage,
  Transcript,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number, // 0 for network-level failures
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // fall through to the generic message
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `network error: ${String(err)}`);
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as T;
  }

  listProblems(): Promise<ProblemPage> {
    return this.request<ProblemPage>("/problems");
  }

  createSession(problemId: string): Promise<CreateSessionResponse> {
    return this.request<CreateSessionResponse>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ problem_id: problemId }),
    });
  }

  postMessage(sessionId: string, text: string): Promise<PostMessageResponse> {
    return this.request<PostMessageResponse>(`/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  getSession(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(`/sessions/${sessionId}`);
  }
}
