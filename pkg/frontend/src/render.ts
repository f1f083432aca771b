/**
 * Pure rendering: ViewState in, HTML string out.
 *
 * No DOM access and no state mutation happen here, so every visual state
 * is testable by string assertion. Interactive elements carry data-action
 * attributes; the thin binding layer in main.ts maps events back to
 * controller calls.
 *
 * The word "controlled" is emitted only for a verdict that carries a
 * server certificate id; every green state names its certificate.
 */

import type { Loss } from "./schemas.js";
import { lossLabel, sameLoss } from "./state.js";
import type { TimelineEntry, Verdict, ViewState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function fmt(x: number): string {
  if (x === Infinity) return "inf";
  if (x === -Infinity) return "-inf";
  if (Number.isNaN(x)) return "nan";
  if (Number.isInteger(x)) return String(x);
  return String(parseFloat(x.toPrecision(6)));
}

function fmtSet(indices: number[]): string {
  return indices.length === 0 ? "empty set" : `{${indices.join(", ")}}`;
}

const LOSS_TABS: Loss[] = [
  { kind: "fdp" },
  { kind: "kfwer", k: 1 },
  { kind: "fdx", gamma: 0.1 },
  { kind: "kfwer", k: 2 },
];

function renderOnboarding(state: ViewState): string {
  return `
  <section class="onboarding">
    <h1>eclosure explorer</h1>
    <p>No session loaded. Create one from raw values or open an existing
    session by id; every answer below comes from the session service.</p>
    <form data-form="create">
      <label>Service URL <input name="base" value="http://127.0.0.1:8000"></label>
      <label>Method
        <select name="method">
          <option value="closed-ebh">closed-eBH (e-values)</option>
          <option value="closed-knockoff">closed-Knockoff (w statistics)</option>
          <option value="closed-bh">closed-BH (p-values)</option>
          <option value="closed-by">closed-BY (p-values)</option>
          <option value="closed-su">closed-Su (p-values)</option>
          <option value="closed-adabh">closed-adaBH (p-values)</option>
        </select>
      </label>
      <label>Values (comma separated) <input name="values" placeholder="30, 10, 0"></label>
      <label>Level &#945; <input name="alpha" value="0.05"></label>
      <label>&#955; (adaBH only) <input name="lambda" placeholder=""></label>
      <button type="submit" data-action="create">Create session</button>
    </form>
    <form data-form="open">
      <label>Service URL <input name="base" value="http://127.0.0.1:8000"></label>
      <label>Session id <input name="session"></label>
      <button type="submit" data-action="open">Open</button>
    </form>
    ${state.error ? renderError(state.error) : ""}
  </section>`;
}

function renderError(message: string): string {
  return `<div class="toast error" role="alert">${escapeHtml(message)}</div>`;
}

function renderHeader(state: ViewState): string {
  const s = state.session;
  if (s === null) return "";
  return `
  <header class="session">
    <h1>${escapeHtml(s.method)} session <code>${escapeHtml(s.id)}</code></h1>
    <p>
      m = ${s.m} (${escapeHtml(s.kind)} input),
      level &#945; = ${fmt(state.alpha.value)},
      collection <code class="fingerprint">${escapeHtml(s.fingerprint.slice(0, 12))}</code>
    </p>
    <p>Server largest set under ${escapeHtml(lossLabel(state.lossTab))}:
      <strong>${fmtSet(state.suggestion ?? s.largest)}</strong>
      <button data-action="adopt-suggestion" ${state.busy ? "disabled" : ""}>use as selection</button>
    </p>
  </header>`;
}

function renderRows(state: ViewState): string {
  const s = state.session;
  if (s === null) return "";
  const suggested = new Set(state.suggestion ?? s.largest);
  const witness = new Set(
    state.verdict.status === "violated" ? state.verdict.witness : [],
  );
  const rows = s.values
    .map((value, i) => {
      const index = i + 1;
      const selected = state.selection.includes(index);
      const classes = [
        selected ? "selected" : "",
        suggested.has(index) ? "suggested" : "",
        witness.has(index) ? "witness" : "",
      ]
        .filter(Boolean)
        .join(" ");
      return `
      <tr class="${classes}">
        <td>${index}</td>
        <td>${fmt(value)}</td>
        <td><input type="checkbox" data-action="toggle" data-index="${index}"
             ${selected ? "checked" : ""} ${state.busy ? "disabled" : ""}></td>
        <td>${suggested.has(index) ? '<span class="badge">suggested</span>' : ""}
            ${witness.has(index) ? '<span class="badge bad">in witness</span>' : ""}</td>
      </tr>`;
    })
    .join("");
  return `
  <table class="hypotheses">
    <thead><tr><th>i</th><th>value</th><th>in selection</th><th></th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

function renderVerdict(state: ViewState): string {
  const v: Verdict = state.verdict;
  const label = lossLabel(state.lossTab);
  const sel = fmtSet(state.selection);
  switch (v.status) {
    case "idle":
      return `<section class="verdict idle"><p>No certificate yet for ${sel}.</p></section>`;
    case "checking":
      return `<section class="verdict checking"><p>Checking ${sel}&#8230;</p></section>`;
    case "controlled":
      return `
      <section class="verdict ok">
        <p><strong>${sel} is controlled</strong> for ${escapeHtml(label)}
        at &#945; = ${fmt(state.alpha.value)}
        (slack ${fmt(v.margin)}).</p>
        <p>Certificate <code class="certificate-id">${escapeHtml(v.certificateId)}</code></p>
      </section>`;
    case "violated":
      return `
      <section class="verdict bad">
        <p><strong>${sel} is not a member</strong> for ${escapeHtml(label)}
        at &#945; = ${fmt(state.alpha.value)}
        (deficit ${fmt(v.margin)}).</p>
        <p>Violating subset: <strong class="witness-set">${fmtSet(v.witness)}</strong></p>
        <p>Certificate <code class="certificate-id">${escapeHtml(v.certificateId)}</code></p>
      </section>`;
  }
}

function renderLossTabs(state: ViewState): string {
  const tabs = LOSS_TABS.map((loss) => {
    const active = sameLoss(loss, state.lossTab);
    const params = [
      loss.k !== undefined ? `data-k="${loss.k}"` : "",
      loss.gamma !== undefined ? `data-gamma="${loss.gamma}"` : "",
    ]
      .filter(Boolean)
      .join(" ");
    return `<button data-action="loss-tab" data-loss="${loss.kind}" ${params}
      class="tab ${active ? "active" : ""}" ${state.busy ? "disabled" : ""}>
      ${escapeHtml(lossLabel(loss))}</button>`;
  }).join("");
  return `<nav class="loss-tabs">${tabs}</nav>`;
}

function renderAlphaControl(state: ViewState): string {
  const a = state.alpha;
  if (!a.adjustable) {
    return `
    <section class="alpha locked">
      <label>&#945;
        <input type="range" min="0.005" max="1" step="0.005"
               value="${a.value}" disabled
               title="the level is baked into this collection's e-values, so it cannot move">
      </label>
      <span class="alpha-value">${fmt(a.value)}</span>
      <span class="locked-note">level locked: this collection's e-values are
      built for &#945; = ${fmt(a.value)}</span>
    </section>`;
  }
  const marker =
    a.frontier === null
      ? ""
      : Number.isFinite(a.frontier)
        ? `<span class="frontier-marker">critical &#945; of selection: ${fmt(a.frontier)}</span>
           <datalist id="frontier-ticks"><option value="${a.frontier}"></option></datalist>`
        : `<span class="frontier-marker">selection is not a member at any level</span>`;
  return `
  <section class="alpha">
    <label>&#945;
      <input type="range" min="0.005" max="1" step="0.005"
             value="${a.value}" data-action="alpha" list="frontier-ticks"
             ${state.busy ? "disabled" : ""}>
    </label>
    <span class="alpha-value">${fmt(a.value)}</span>
    ${marker}
  </section>`;
}

function renderBound(state: ViewState): string {
  if (state.bound === null) return "";
  return `<p class="bound">At least <strong>${state.bound}</strong> true
  ${state.bound === 1 ? "discovery" : "discoveries"} in ${fmtSet(state.selection)}
  (simultaneous over all selections).</p>`;
}

function renderTimelineEntry(entry: TimelineEntry): string {
  const mark = entry.member ? '<span class="mark ok">&#10003;</span>'
                            : '<span class="mark bad">&#10007;</span>';
  const badge = entry.binding ? '<span class="badge binding">binding</span>' : "";
  return `
  <li class="timeline-entry ${entry.member ? "ok" : "bad"}">
    ${mark} <span class="action">${escapeHtml(entry.action)}</span> ${badge}
    ${fmtSet(entry.set)} under ${escapeHtml(lossLabel(entry.loss))}
    at &#945; = ${fmt(entry.alpha)}
    <code class="certificate-id">${escapeHtml(entry.certificateId)}</code>
  </li>`;
}

function renderTimeline(state: ViewState): string {
  if (state.timeline.length === 0) {
    return `<section class="timeline"><h2>Audit timeline</h2><p>No entries yet.</p></section>`;
  }
  return `
  <section class="timeline">
    <h2>Audit timeline</h2>
    <ol>${state.timeline.map(renderTimelineEntry).join("")}</ol>
  </section>`;
}

export function render(state: ViewState): string {
  if (state.phase === "onboarding") {
    return `<div class="explorer">${renderOnboarding(state)}</div>`;
  }
  if (state.phase === "loading") {
    return `<div class="explorer"><p class="loading">Loading session&#8230;</p>
      ${state.error ? renderError(state.error) : ""}</div>`;
  }
  return `
  <div class="explorer">
    ${state.error ? renderError(state.error) : ""}
    ${renderHeader(state)}
    ${renderLossTabs(state)}
    ${renderRows(state)}
    ${renderVerdict(state)}
    ${renderBound(state)}
    ${renderAlphaControl(state)}
    <button data-action="finalize" ${state.busy ? "disabled" : ""}>
      Finalize ${fmtSet(state.selection)} (binding)</button>
    ${renderTimeline(state)}
  </div>`;
}
