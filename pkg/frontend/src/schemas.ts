/**
 * Wire schemas for the eclosure session service.
 *
 * Every response body is validated with zod before it reaches application
 * state, so a malformed or drifted server payload fails loudly at the
 * boundary instead of corrupting the view. Non-finite floats cross the
 * wire as the strings "inf" / "-inf" / "nan" (strict JSON); they are
 * decoded back to numbers here.
 */

import { z } from "zod";

const wireFloat = z.union([
  z.number(),
  z
    .enum(["inf", "-inf", "nan"])
    .transform((s) => (s === "inf" ? Infinity : s === "-inf" ? -Infinity : NaN)),
]);

const indexList = z.array(z.number().int().positive());

export const lossSchema = z.object({
  kind: z.enum(["fdp", "kfwer", "pfer", "fdx", "aer"]),
  k: z.number().int().optional(),
  gamma: z.number().optional(),
});

export const certificateSchema = z.object({
  member: z.boolean(),
  witness: indexList.nullable(),
  margin: wireFloat,
});

export const sessionSummarySchema = z.object({
  id: z.string(),
  method: z.string(),
  m: z.number().int().positive(),
  kind: z.string(),
  values: z.array(z.number()),
  alpha: z.number(),
  alpha_adjustable: z.boolean(),
  largest: indexList,
  fwer_set: indexList.nullable(),
  fwer_nonempty: z.boolean().nullable(),
  diagnostics: z.record(z.string(), z.unknown()),
  fingerprint: z.string(),
  created: z.string(),
  updated: z.string(),
  audit_length: z.number().int().nonnegative(),
});

export const membershipResponseSchema = z.object({
  certificate: certificateSchema,
  certificate_id: z.string(),
  alpha: z.number(),
});

export const switchLossResponseSchema = z.object({
  loss: lossSchema,
  rejected: indexList,
  certificate: certificateSchema,
  certificate_id: z.string(),
});

export const auditEntrySchema = z.object({
  seq: z.number().int().positive(),
  timestamp: z.string(),
  action: z.string(),
  loss: lossSchema,
  alpha: z.number(),
  set: indexList,
  certificate: certificateSchema,
  binding: z.boolean(),
  fingerprint: z.string(),
  certificate_id: z.string(),
});

export const auditResponseSchema = z.object({
  fingerprint: z.string(),
  passed: z.boolean(),
  entries: z.array(auditEntrySchema),
});

export const finalizeResponseSchema = z.object({
  accepted: z.boolean(),
  certificate: certificateSchema,
  certificate_id: z.string(),
  audit: z.object({
    fingerprint: z.string(),
    entries: z.array(auditEntrySchema),
  }),
});

export const boundResponseSchema = z.object({
  set: indexList,
  alpha: z.number(),
  true_discovery_bound: z.number().int().nonnegative(),
});

export const frontierResponseSchema = z.object({
  set: indexList,
  loss: lossSchema,
  alpha: z.number(),
  critical_alpha: wireFloat,
});

export const errorBodySchema = z.object({
  code: z.string(),
  message: z.string(),
});

export type Loss = z.infer<typeof lossSchema>;
export type Certificate = z.infer<typeof certificateSchema>;
export type SessionSummary = z.infer<typeof sessionSummarySchema>;
export type MembershipResponse = z.infer<typeof membershipResponseSchema>;
export type SwitchLossResponse = z.infer<typeof switchLossResponseSchema>;
export type AuditEntry = z.infer<typeof auditEntrySchema>;
export type AuditResponse = z.infer<typeof auditResponseSchema>;
export type FinalizeResponse = z.infer<typeof finalizeResponseSchema>;
export type BoundResponse = z.infer<typeof boundResponseSchema>;
export type FrontierResponse = z.infer<typeof frontierResponseSchema>;
