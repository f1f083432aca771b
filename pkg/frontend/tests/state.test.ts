import { describe, expect, it } from "vitest";

import {
  initialState,
  lossLabel,
  sameLoss,
  snapAlpha,
  timelineFromAudit,
  toggledSelection,
  verdictFromCertificate,
} from "../src/state.js";
import { makeAuditEntry, makeCertificate } from "./fixtures.js";

describe("initial state", () => {
  it("starts on the onboarding screen with nothing selected", () => {
    const state = initialState();
    expect(state.phase).toBe("onboarding");
    expect(state.session).toBeNull();
    expect(state.selection).toEqual([]);
    expect(state.verdict).toEqual({ status: "idle" });
  });
});

describe("verdictFromCertificate", () => {
  it("a member certificate becomes a controlled verdict carrying its id", () => {
    const v = verdictFromCertificate(makeCertificate({ margin: 0.5 }), "id42");
    expect(v).toEqual({ status: "controlled", certificateId: "id42", margin: 0.5 });
  });

  it("a non-member certificate keeps its witness and deficit", () => {
    const cert = makeCertificate({ member: false, witness: [2, 3], margin: -5 });
    const v = verdictFromCertificate(cert, "id43");
    expect(v).toEqual({
      status: "violated",
      certificateId: "id43",
      witness: [2, 3],
      margin: -5,
    });
  });
});

describe("toggledSelection", () => {
  it("adds a missing index in sorted position", () => {
    expect(toggledSelection([1, 3], 2)).toEqual([1, 2, 3]);
  });

  it("removes a present index", () => {
    expect(toggledSelection([1, 2, 3], 2)).toEqual([1, 3]);
  });

  it("does not mutate its input", () => {
    const selection = [1, 2];
    toggledSelection(selection, 3);
    expect(selection).toEqual([1, 2]);
  });
});

describe("snapAlpha", () => {
  it("snaps onto the frontier within half a step", () => {
    expect(snapAlpha(0.102, 0.1, 0.005)).toBe(0.1);
    expect(snapAlpha(0.098, 0.1, 0.005)).toBe(0.1);
  });

  it("leaves values outside the snap radius alone", () => {
    expect(snapAlpha(0.11, 0.1, 0.005)).toBe(0.11);
  });

  it("ignores unknown or infinite frontiers", () => {
    expect(snapAlpha(0.1, null, 0.005)).toBe(0.1);
    expect(snapAlpha(0.1, Infinity, 0.005)).toBe(0.1);
  });
});

describe("timelineFromAudit", () => {
  it("keeps order, binding flags, and certificate ids", () => {
    const entries = [
      makeAuditEntry({ seq: 1, action: "membership", certificate_id: "a1" }),
      makeAuditEntry({
        seq: 2,
        action: "finalize",
        binding: true,
        certificate_id: "b2",
        certificate: makeCertificate({ margin: 0 }),
      }),
    ];
    const timeline = timelineFromAudit(entries);
    expect(timeline.map((e) => e.seq)).toEqual([1, 2]);
    expect(timeline[1]).toMatchObject({
      action: "finalize",
      binding: true,
      member: true,
      certificateId: "b2",
    });
  });
});

describe("loss helpers", () => {
  it("labels the standard tabs", () => {
    expect(lossLabel({ kind: "fdp" })).toBe("FDR");
    expect(lossLabel({ kind: "kfwer", k: 1 })).toBe("FWER");
    expect(lossLabel({ kind: "kfwer", k: 2 })).toBe("kFWER(k=2)");
    expect(lossLabel({ kind: "fdx", gamma: 0.1 })).toContain("FDX");
  });

  it("compares losses by kind and parameters", () => {
    expect(sameLoss({ kind: "kfwer", k: 1 }, { kind: "kfwer", k: 1 })).toBe(true);
    expect(sameLoss({ kind: "kfwer", k: 1 }, { kind: "kfwer", k: 2 })).toBe(false);
    expect(sameLoss({ kind: "fdp" }, { kind: "kfwer", k: 1 })).toBe(false);
  });
});
