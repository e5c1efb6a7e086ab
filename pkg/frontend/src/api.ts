/**
 * Thin client for the node's /v1 API.
 *
 * Every response is an envelope {request_id, ok, result | error}; this
 * module unwraps it and turns error envelopes into ApiError carrying the
 * node's code and message verbatim, so screens can show exactly what the
 * node said. Network-level failures surface as NetworkError instead, which
 * the screens treat as retryable without losing form state.
 */

import { bytesToBase64 } from "./codec.js";
import type {
  ChainHealth,
  LatencyLeg,
  LotSummary,
  RegisterResult,
  Session,
  SubmitResult,
  SurveyReport,
  Trace,
  TxInfo,
  UserEntry,
} from "./model.js";

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`node unreachable: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "NetworkError";
  }
}

interface Envelope<T> {
  request_id: string;
  ok: boolean;
  result?: T;
  error?: { code: string; message: string };
}

export class NodeClient {
  // wrapped so the call never depends on a `this` binding (browser fetch does)
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = (...args) => fetch(...args),
  ) {}

  token: string | null = null;

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["content-type"] = "application/json";
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new NetworkError(cause);
    }
    let envelope: Envelope<T>;
    try {
      envelope = (await response.json()) as Envelope<T>;
    } catch (cause) {
      throw new NetworkError(cause);
    }
    if (!envelope.ok || envelope.result === undefined) {
      const err = envelope.error ?? { code: "Unknown", message: "malformed error envelope" };
      throw new ApiError(err.code, err.message, response.status);
    }
    return envelope.result;
  }

  register(body: {
    name: string;
    email: string;
    phone: string;
    password: string;
    role: string;
    recovery: { question: string; answer: string }[];
  }): Promise<RegisterResult> {
    return this.call("POST", "/v1/register", body);
  }

  login(userId: string, password: string): Promise<Session> {
    return this.call("POST", "/v1/login", { user_id: userId, password });
  }

  recover(userId: string, answers: string[], newPassword: string): Promise<Session> {
    return this.call("POST", "/v1/recover", {
      user_id: userId,
      answers,
      new_password: newPassword,
    });
  }

  submitTx(raw: Uint8Array): Promise<SubmitResult> {
    return this.call("POST", "/v1/tx", { tx: bytesToBase64(raw) });
  }

  lots(): Promise<LotSummary[]> {
    return this.call("GET", "/v1/lots");
  }

  users(): Promise<UserEntry[]> {
    return this.call("GET", "/v1/users");
  }

  tx(txId: string): Promise<TxInfo> {
    return this.call("GET", `/v1/tx/${txId}`);
  }

  trace(lotId: string): Promise<Trace> {
    return this.call("GET", `/v1/lot/${lotId}/trace`);
  }

  latency(lotId: string): Promise<LatencyLeg[]> {
    return this.call("GET", `/v1/lot/${lotId}/latency`);
  }

  chainVerify(): Promise<ChainHealth> {
    return this.call("GET", "/v1/chain/verify");
  }

  surveyReport(): Promise<SurveyReport> {
    return this.call("GET", "/v1/survey/report");
  }
}
