/**
 * View state for the explorer and the pure helpers that advance it.
 *
 * The state is plain data: the controller owns one ViewState, every
 * transition builds a new object, and rendering is a pure function of it.
 * A "controlled" verdict can only be constructed from a server
 * certificate, so the view cannot claim control without one.
 */

import type { AuditEntry, Certificate, Loss, SessionSummary } from "./schemas.js";

export type Verdict =
  | { status: "idle" }
  | { status: "checking" }
  | { status: "controlled"; certificateId: string; margin: number }
  | {
      status: "violated";
      certificateId: string;
      witness: number[];
      margin: number;
    };

export interface AlphaControl {
  value: number;
  adjustable: boolean;
  /** Critical level of the working selection; null when unknown or locked. */
  frontier: number | null;
}

export interface TimelineEntry {
  seq: number;
  timestamp: string;
  action: string;
  set: number[];
  loss: Loss;
  alpha: number;
  binding: boolean;
  member: boolean;
  certificateId: string;
}

export interface ViewState {
  phase: "onboarding" | "loading" | "ready";
  error: string | null;
  session: SessionSummary | null;
  selection: number[];
  verdict: Verdict;
  lossTab: Loss;
  /** Server's largest set under the current loss (suggestion to adopt). */
  suggestion: number[] | null;
  alpha: AlphaControl;
  bound: number | null;
  timeline: TimelineEntry[];
  busy: boolean;
}

export function initialState(): ViewState {
  return {
    phase: "onboarding",
    error: null,
    session: null,
    selection: [],
    verdict: { status: "idle" },
    lossTab: { kind: "fdp" },
    suggestion: null,
    alpha: { value: 0.05, adjustable: false, frontier: null },
    bound: null,
    timeline: [],
    busy: false,
  };
}

export function verdictFromCertificate(cert: Certificate, certificateId: string): Verdict {
  if (cert.member) {
    return { status: "controlled", certificateId, margin: cert.margin };
  }
  return {
    status: "violated",
    certificateId,
    witness: cert.witness ?? [],
    margin: cert.margin,
  };
}

export function toggledSelection(selection: number[], index: number): number[] {
  const next = selection.includes(index)
    ? selection.filter((i) => i !== index)
    : [...selection, index];
  return next.sort((a, b) => a - b);
}

/**
 * Snap a raw slider value to the server-computed frontier when it lands
 * within half a slider step, so the control hits the critical level
 * exactly instead of flickering an epsilon to either side.
 */
export function snapAlpha(raw: number, frontier: number | null, step: number): number {
  if (frontier !== null && Number.isFinite(frontier) && Math.abs(raw - frontier) <= step / 2) {
    return frontier;
  }
  return raw;
}

export function timelineFromAudit(entries: AuditEntry[]): TimelineEntry[] {
  return entries.map((e) => ({
    seq: e.seq,
    timestamp: e.timestamp,
    action: e.action,
    set: e.set,
    loss: e.loss,
    alpha: e.alpha,
    binding: e.binding,
    member: e.certificate.member,
    certificateId: e.certificate_id,
  }));
}

export function lossLabel(loss: Loss): string {
  switch (loss.kind) {
    case "fdp":
      return "FDR";
    case "kfwer":
      return loss.k === undefined || loss.k === 1 ? "FWER" : `kFWER(k=${loss.k})`;
    case "fdx":
      return `FDX(γ=${loss.gamma ?? 0})`;
    case "pfer":
      return "PFER";
    case "aer":
      return "AER";
  }
}

export function sameLoss(a: Loss, b: Loss): boolean {
  return a.kind === b.kind && (a.k ?? null) === (b.k ?? null) && (a.gamma ?? null) === (b.gamma ?? null);
}
