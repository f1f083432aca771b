import { describe, expect, it } from "vitest";

import {
  auditResponseSchema,
  certificateSchema,
  errorBodySchema,
  frontierResponseSchema,
  membershipResponseSchema,
  sessionSummarySchema,
} from "../src/schemas.js";
import { makeAuditEntry, makeSummary } from "./fixtures.js";

describe("wire schemas", () => {
  it("accepts a full session summary", () => {
    const parsed = sessionSummarySchema.parse(makeSummary());
    expect(parsed.largest).toEqual([]);
    expect(parsed.values).toEqual([30, 10, 0]);
  });

  it("rejects a summary missing its fingerprint", () => {
    const { fingerprint: _drop, ...rest } = makeSummary();
    expect(() => sessionSummarySchema.parse(rest)).toThrow();
  });

  it("decodes non-finite margins from their wire strings", () => {
    const inf = certificateSchema.parse({ member: true, witness: null, margin: "inf" });
    expect(inf.margin).toBe(Infinity);
    const neg = certificateSchema.parse({ member: false, witness: [2, 3], margin: "-inf" });
    expect(neg.margin).toBe(-Infinity);
    const plain = certificateSchema.parse({ member: true, witness: null, margin: 0.25 });
    expect(plain.margin).toBe(0.25);
  });

  it("rejects margins that are neither numbers nor wire strings", () => {
    expect(() =>
      certificateSchema.parse({ member: true, witness: null, margin: "huge" }),
    ).toThrow();
  });

  it("accepts a membership response and an audit trail", () => {
    const membership = membershipResponseSchema.parse({
      certificate: { member: false, witness: [2, 3], margin: -5 },
      certificate_id: "14ca7bec94656cae",
      alpha: 0.05,
    });
    expect(membership.certificate.witness).toEqual([2, 3]);

    const audit = auditResponseSchema.parse({
      fingerprint: "f".repeat(64),
      passed: true,
      entries: [makeAuditEntry(), makeAuditEntry({ seq: 2, binding: true })],
    });
    expect(audit.entries).toHaveLength(2);
    expect(audit.entries[1]?.binding).toBe(true);
  });

  it("decodes an infinite critical level on the frontier", () => {
    const frontier = frontierResponseSchema.parse({
      set: [3],
      loss: { kind: "fdp" },
      alpha: 0.05,
      critical_alpha: "inf",
    });
    expect(frontier.critical_alpha).toBe(Infinity);
  });

  it("parses the service error body", () => {
    const body = errorBodySchema.parse({ code: "alpha_locked", message: "nope" });
    expect(body.code).toBe("alpha_locked");
  });
});
