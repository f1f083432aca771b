/** Shared builders for unit tests: plausible wire objects with overrides. */

import type {
  AuditEntry,
  Certificate,
  MembershipResponse,
  SessionSummary,
} from "../src/schemas.js";

export function makeSummary(overrides: Partial<SessionSummary> = {}): SessionSummary {
  return {
    id: "abc123def456",
    method: "closed-eBH",
    m: 3,
    kind: "evalue",
    values: [30, 10, 0],
    alpha: 0.05,
    alpha_adjustable: true,
    largest: [],
    fwer_set: [],
    fwer_nonempty: false,
    diagnostics: { r: 0 },
    fingerprint: "f".repeat(64),
    created: "2026-01-01T00:00:00+00:00",
    updated: "2026-01-01T00:00:00+00:00",
    audit_length: 0,
    ...overrides,
  };
}

export function makeCertificate(overrides: Partial<Certificate> = {}): Certificate {
  return { member: true, witness: null, margin: 1.5, ...overrides };
}

export function makeMembership(
  overrides: Partial<MembershipResponse> = {},
): MembershipResponse {
  return {
    certificate: makeCertificate(),
    certificate_id: "cert00000001",
    alpha: 0.05,
    ...overrides,
  };
}

export function makeAuditEntry(overrides: Partial<AuditEntry> = {}): AuditEntry {
  return {
    seq: 1,
    timestamp: "2026-01-01T00:00:01+00:00",
    action: "membership",
    loss: { kind: "fdp" },
    alpha: 0.05,
    set: [1, 2],
    certificate: makeCertificate(),
    binding: false,
    fingerprint: "f".repeat(64),
    certificate_id: "cert00000001",
    ...overrides,
  };
}
