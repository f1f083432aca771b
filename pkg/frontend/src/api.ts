/**
 * HTTP client for the eclosure session service.
 *
 * Plain fetch wrappers, one per endpoint; every response is validated
 * against its wire schema. Server-side failures surface as ApiError with
 * the service's {code, message} body, network failures as ApiError with
 * code "network".
 */

import type { z } from "zod";
import {
  auditResponseSchema,
  boundResponseSchema,
  errorBodySchema,
  finalizeResponseSchema,
  frontierResponseSchema,
  membershipResponseSchema,
  sessionSummarySchema,
  switchLossResponseSchema,
} from "./schemas.js";
import type {
  AuditResponse,
  BoundResponse,
  FinalizeResponse,
  FrontierResponse,
  Loss,
  MembershipResponse,
  SessionSummary,
  SwitchLossResponse,
} from "./schemas.js";

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

export interface CreateSessionRequest {
  method: string;
  values: number[];
  alpha: number;
  kind?: string;
  lambda?: number;
}

/** The service surface the explorer consumes; Client is the live one. */
export interface EclosureApi {
  createSession(request: CreateSessionRequest): Promise<SessionSummary>;
  getSession(id: string): Promise<SessionSummary>;
  membership(id: string, set: number[], loss?: Loss): Promise<MembershipResponse>;
  switchLoss(id: string, loss: Loss): Promise<SwitchLossResponse>;
  setAlpha(id: string, alpha: number): Promise<SessionSummary>;
  finalize(id: string, set: number[], loss?: Loss, alpha?: number): Promise<FinalizeResponse>;
  getAudit(id: string): Promise<AuditResponse>;
  getBound(id: string, set: number[]): Promise<BoundResponse>;
  getFrontier(id: string, set: number[], loss?: Loss): Promise<FrontierResponse>;
}

export class Client implements EclosureApi {
  constructor(private readonly baseUrl: string) {}

  private async request<S extends z.ZodType>(
    schema: S,
    path: string,
    init?: RequestInit,
  ): Promise<z.output<S>> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}${path}`, init);
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      throw new ApiError("network", `service unreachable: ${reason}`, 0);
    }
    if (!response.ok) {
      let code = "http_error";
      let message = `${response.status} ${response.statusText}`;
      try {
        const body = errorBodySchema.parse(await response.json());
        code = body.code;
        message = body.message;
      } catch {
        // keep the generic message when the body is not the service's shape
      }
      throw new ApiError(code, message, response.status);
    }
    return schema.parse(await response.json());
  }

  private post<S extends z.ZodType>(
    schema: S,
    path: string,
    body: unknown,
  ): Promise<z.output<S>> {
    return this.request(schema, path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(request: CreateSessionRequest): Promise<SessionSummary> {
    return this.post(sessionSummarySchema, "/sessions", request);
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.request(sessionSummarySchema, `/sessions/${id}`);
  }

  membership(id: string, set: number[], loss?: Loss): Promise<MembershipResponse> {
    return this.post(membershipResponseSchema, `/sessions/${id}/membership`, {
      set,
      ...(loss ? { loss } : {}),
    });
  }

  switchLoss(id: string, loss: Loss): Promise<SwitchLossResponse> {
    return this.post(switchLossResponseSchema, `/sessions/${id}/switch-loss`, { loss });
  }

  setAlpha(id: string, alpha: number): Promise<SessionSummary> {
    return this.post(sessionSummarySchema, `/sessions/${id}/alpha`, { alpha });
  }

  finalize(
    id: string,
    set: number[],
    loss?: Loss,
    alpha?: number,
  ): Promise<FinalizeResponse> {
    return this.post(finalizeResponseSchema, `/sessions/${id}/finalize`, {
      set,
      ...(loss ? { loss } : {}),
      ...(alpha !== undefined ? { alpha } : {}),
    });
  }

  getAudit(id: string): Promise<AuditResponse> {
    return this.request(auditResponseSchema, `/sessions/${id}/audit`);
  }

  getBound(id: string, set: number[]): Promise<BoundResponse> {
    return this.request(boundResponseSchema, `/sessions/${id}/bound?set=${set.join(",")}`);
  }

  getFrontier(id: string, set: number[], loss?: Loss): Promise<FrontierResponse> {
    const params = new URLSearchParams({ set: set.join(",") });
    if (loss) {
      params.set("loss", loss.kind);
      if (loss.k !== undefined) params.set("k", String(loss.k));
      if (loss.gamma !== undefined) params.set("gamma", String(loss.gamma));
    }
    return this.request(frontierResponseSchema, `/sessions/${id}/frontier?${params}`);
  }
}
