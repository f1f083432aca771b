/**
 * Explorer controller: owns the ViewState and talks to the session
 * service.
 *
 * Mutations are serialized through a promise queue (at most one in-flight
 * request per session); toggles update the selection optimistically and
 * roll back to the last server-confirmed state when the request fails.
 * Responses are applied only when the selection they certify is still the
 * working selection, so the verdict always reflects the latest server
 * certificate for what is on screen.
 */

import { ApiError } from "./api.js";
import type { CreateSessionRequest, EclosureApi } from "./api.js";
import type { Loss, SessionSummary } from "./schemas.js";
import {
  initialState,
  snapAlpha,
  timelineFromAudit,
  toggledSelection,
  verdictFromCertificate,
} from "./state.js";
import type { TimelineEntry, Verdict, ViewState } from "./state.js";

export const ALPHA_STEP = 0.005;

function errorMessage(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}

function sameSelection(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

interface Confirmed {
  selection: number[];
  verdict: Verdict;
}

export class Explorer {
  private state: ViewState = initialState();
  private queue: Promise<void> = Promise.resolve();
  private confirmed: Confirmed | null = null;

  constructor(
    private readonly api: EclosureApi,
    private readonly onChange: (state: ViewState) => void = () => {},
  ) {}

  getState(): ViewState {
    return this.state;
  }

  private update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    this.onChange(this.state);
  }

  /**
   * Run one mutation after all earlier ones have settled. A failed step
   * applies its rollback patch and surfaces the error; the queue itself
   * never rejects, so later mutations still run.
   */
  private enqueue(
    step: () => Promise<void>,
    rollback?: () => Partial<ViewState>,
  ): Promise<void> {
    const run = async () => {
      this.update({ busy: true, error: null });
      try {
        await step();
        this.update({ busy: false });
      } catch (err) {
        this.update({
          ...(rollback ? rollback() : {}),
          busy: false,
          error: errorMessage(err),
        });
      }
    };
    this.queue = this.queue.then(run);
    return this.queue;
  }

  private revertToConfirmed(): Partial<ViewState> {
    if (this.confirmed === null) {
      return { verdict: { status: "idle" } };
    }
    return {
      selection: this.confirmed.selection,
      verdict: this.confirmed.verdict,
    };
  }

  private sessionId(): string {
    const s = this.state.session;
    if (s === null) throw new Error("no session loaded");
    return s.id;
  }

  /** Fetch bound and frontier for a selection; both are non-fatal reads. */
  private async refreshReadouts(selection: number[], loss: Loss): Promise<void> {
    const id = this.sessionId();
    let bound: number | null = null;
    try {
      bound = (await this.api.getBound(id, selection)).true_discovery_bound;
    } catch {
      bound = null;
    }
    let frontier: number | null = null;
    if (this.state.alpha.adjustable) {
      try {
        frontier = (await this.api.getFrontier(id, selection, loss)).critical_alpha;
      } catch {
        frontier = null;
      }
    }
    this.update({ bound, alpha: { ...this.state.alpha, frontier } });
  }

  /** Certify the current selection and adopt the verdict if still current. */
  private checkSelection(): Promise<void> {
    const target = [...this.state.selection];
    const loss = this.state.lossTab;
    return this.enqueue(
      async () => {
        const r = await this.api.membership(this.sessionId(), target, loss);
        if (sameSelection(this.state.selection, target)) {
          const verdict = verdictFromCertificate(r.certificate, r.certificate_id);
          this.confirmed = { selection: target, verdict };
          this.update({ verdict });
          await this.refreshReadouts(target, loss);
        }
      },
      () => this.revertToConfirmed(),
    );
  }

  async create(request: CreateSessionRequest): Promise<void> {
    this.update({ phase: "loading", error: null });
    let timeline: TimelineEntry[];
    try {
      const summary = await this.api.createSession(request);
      timeline = [];
      this.adopt(summary, timeline);
    } catch (err) {
      this.update({ phase: "onboarding", error: errorMessage(err) });
      return;
    }
    await this.checkSelection();
  }

  async load(sessionId: string): Promise<void> {
    this.update({ phase: "loading", error: null });
    try {
      const summary = await this.api.getSession(sessionId);
      const audit = await this.api.getAudit(sessionId);
      this.adopt(summary, timelineFromAudit(audit.entries));
    } catch (err) {
      this.update({ phase: "onboarding", error: errorMessage(err) });
      return;
    }
    await this.checkSelection();
  }

  private adopt(summary: SessionSummary, timeline: TimelineEntry[]): void {
    this.confirmed = {
      selection: [...summary.largest],
      verdict: { status: "idle" },
    };
    this.update({
      phase: "ready",
      error: null,
      session: summary,
      selection: [...summary.largest],
      verdict: { status: "checking" },
      lossTab: { kind: "fdp" },
      suggestion: [...summary.largest],
      alpha: {
        value: summary.alpha,
        adjustable: summary.alpha_adjustable,
        frontier: null,
      },
      bound: null,
      timeline,
      busy: false,
    });
  }

  /** Flip hypothesis `index` in or out, optimistically, then certify. */
  toggle(index: number): Promise<void> {
    if (this.state.phase !== "ready") return Promise.resolve();
    const target = toggledSelection(this.state.selection, index);
    this.update({ selection: target, verdict: { status: "checking" } });
    const loss = this.state.lossTab;
    return this.enqueue(
      async () => {
        const r = await this.api.membership(this.sessionId(), target, loss);
        if (sameSelection(this.state.selection, target)) {
          const verdict = verdictFromCertificate(r.certificate, r.certificate_id);
          this.confirmed = { selection: target, verdict };
          this.update({ verdict });
          await this.refreshReadouts(target, loss);
        }
      },
      () => this.revertToConfirmed(),
    );
  }

  /** Adopt the server's suggested set as the working selection. */
  adoptSuggestion(): Promise<void> {
    if (this.state.phase !== "ready") return Promise.resolve();
    const suggestion = this.state.suggestion ?? this.state.session?.largest ?? [];
    this.update({ selection: [...suggestion], verdict: { status: "checking" } });
    return this.checkSelection();
  }

  /** Switch the error-rate tab; the server reports its set for that loss. */
  setLossTab(loss: Loss): Promise<void> {
    if (this.state.phase !== "ready") return Promise.resolve();
    const prevTab = this.state.lossTab;
    this.update({ lossTab: loss, verdict: { status: "checking" } });
    return this.enqueue(
      async () => {
        const sw = await this.api.switchLoss(this.sessionId(), loss);
        this.update({ suggestion: [...sw.rejected] });
        const target = [...this.state.selection];
        const r = await this.api.membership(this.sessionId(), target, loss);
        if (sameSelection(this.state.selection, target)) {
          const verdict = verdictFromCertificate(r.certificate, r.certificate_id);
          this.confirmed = { selection: target, verdict };
          this.update({ verdict });
          await this.refreshReadouts(target, loss);
        }
      },
      () => ({ lossTab: prevTab, ...this.revertToConfirmed() }),
    );
  }

  /**
   * Move the level. The raw slider value snaps to the server-computed
   * critical level of the selection when it lands within half a step.
   * On a locked collection the control is disabled; a programmatic call
   * surfaces an error rather than silently doing nothing.
   */
  slideAlpha(raw: number): Promise<void> {
    if (this.state.phase !== "ready") return Promise.resolve();
    if (!this.state.alpha.adjustable) {
      this.update({
        error:
          "alpha_locked: the level is baked into this collection's e-values",
      });
      return Promise.resolve();
    }
    const snapped = snapAlpha(raw, this.state.alpha.frontier, ALPHA_STEP);
    const prevAlpha = this.state.alpha;
    const loss = this.state.lossTab;
    this.update({
      alpha: { ...prevAlpha, value: snapped },
      verdict: { status: "checking" },
    });
    return this.enqueue(
      async () => {
        const summary = await this.api.setAlpha(this.sessionId(), snapped);
        this.update({
          session: summary,
          suggestion: loss.kind === "fdp" ? [...summary.largest] : this.state.suggestion,
          alpha: { ...this.state.alpha, value: summary.alpha },
        });
        const target = [...this.state.selection];
        const r = await this.api.membership(this.sessionId(), target, loss);
        if (sameSelection(this.state.selection, target)) {
          const verdict = verdictFromCertificate(r.certificate, r.certificate_id);
          this.confirmed = { selection: target, verdict };
          this.update({ verdict });
          await this.refreshReadouts(target, loss);
        }
      },
      () => ({ alpha: prevAlpha, ...this.revertToConfirmed() }),
    );
  }

  /** Make the current selection binding; the audit is re-verified jointly. */
  finalize(): Promise<void> {
    if (this.state.phase !== "ready") return Promise.resolve();
    const target = [...this.state.selection];
    const loss = this.state.lossTab;
    return this.enqueue(async () => {
      const r = await this.api.finalize(this.sessionId(), target, loss);
      this.update({ timeline: timelineFromAudit(r.audit.entries) });
      if (sameSelection(this.state.selection, target)) {
        const verdict = verdictFromCertificate(r.certificate, r.certificate_id);
        this.confirmed = { selection: target, verdict };
        this.update({ verdict });
      }
    });
  }
}
