/** Typed client for the dialogue session service. All state and every number
 * the UI renders comes out of these response payloads; the client never
 * derives values of its own. */

export interface Sibling {
  id: string;
  text: string;
  relation: "support" | "attack" | "root";
}

export interface SessionState {
  session_id: string;
  topic: string;
  current_id: string;
  current_text: string;
  displayed: Sibling[];
  stance: number;
  rejected: string[];
  preferences: Record<string, number>;
  terminated: boolean;
}

export interface CreateSessionResponse {
  session_id: string;
  response_text: string;
  state: SessionState;
}

export interface DebugPayload {
  distribution: Record<string, number>;
  similarity_scores: number[];
}

export interface UtteranceResponse {
  response_text: string;
  intent: string;
  confidence: number;
  resolved_argument: string | null;
  stance: number;
  clarification: boolean;
  state: SessionState;
  debug: DebugPayload;
}

export interface TreeNode {
  id: string;
  text: string;
  relation: "support" | "attack" | "root";
  parent: string | null;
  weight: number;
  children: string[];
  rejected: boolean;
  strength: number | null;
  preferences: number;
}

export interface TreePayload {
  root: string;
  current: string;
  displayed: string[];
  nodes: TreeNode[];
}

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class MalformedResponseError extends Error {
  constructor(detail: string) {
    super(`malformed server reply: ${detail}`);
    this.name = "MalformedResponseError";
  }
}

function isObject(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null;
}

function checkState(x: unknown): SessionState {
  if (
    !isObject(x) ||
    typeof x.session_id !== "string" ||
    typeof x.stance !== "number" ||
    typeof x.terminated !== "boolean" ||
    !Array.isArray(x.displayed)
  ) {
    throw new MalformedResponseError("missing session state fields");
  }
  return x as unknown as SessionState;
}

async function parse(response: Response): Promise<unknown> {
  if (response.status === 204) {
    return null;
  }
  let body: unknown;
  try {
    body = await response.json();
  } catch {
    throw new MalformedResponseError(`non-JSON body (HTTP ${response.status})`);
  }
  if (!response.ok) {
    if (isObject(body) && typeof body.code === "string" && typeof body.message === "string") {
      throw new ApiError(body.code, body.message, response.status);
    }
    throw new MalformedResponseError(`HTTP ${response.status} without error payload`);
  }
  return body;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError("network_error", `cannot reach the service: ${String(err)}`, 0);
    }
    return parse(response);
  }

  async createSession(topic?: string): Promise<CreateSessionResponse> {
    const body = await this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(topic ? { topic } : {}),
    });
    if (!isObject(body) || typeof body.session_id !== "string" || typeof body.response_text !== "string") {
      throw new MalformedResponseError("missing session_id/response_text");
    }
    checkState(body.state);
    return body as unknown as CreateSessionResponse;
  }

  async sendUtterance(sessionId: string, text: string): Promise<UtteranceResponse> {
    const body = await this.request(`/sessions/${sessionId}/utterance`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
    if (
      !isObject(body) ||
      typeof body.response_text !== "string" ||
      typeof body.intent !== "string" ||
      typeof body.stance !== "number" ||
      !isObject(body.debug)
    ) {
      throw new MalformedResponseError("missing utterance reply fields");
    }
    checkState(body.state);
    return body as unknown as UtteranceResponse;
  }

  async getState(sessionId: string): Promise<SessionState> {
    return checkState(await this.request(`/sessions/${sessionId}`));
  }

  async getTree(sessionId: string): Promise<TreePayload> {
    const body = await this.request(`/sessions/${sessionId}/tree`);
    if (!isObject(body) || typeof body.root !== "string" || !Array.isArray(body.nodes)) {
      throw new MalformedResponseError("missing tree fields");
    }
    return body as unknown as TreePayload;
  }

  async deleteSession(sessionId: string): Promise<void> {
    await this.request(`/sessions/${sessionId}`, { method: "DELETE" });
  }
}
