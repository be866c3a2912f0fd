/** Pure HTML rendering: every function maps service-derived state to a
 * markup string, so views can be re-rendered from scratch after any
 * refresh without client-only state. */

import { ALL_TYPES, DIRECTED_TYPES, MentionSummary, PairView, SessionState } from "./api.js";
import { TablePage } from "./review.js";
import { SessionSnapshot } from "./session.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderProgress(state: SessionState): string {
  return (
    `<div class="progress" data-labeled="${state.labeled}" ` +
    `data-unlabeled="${state.unlabeled}" data-iteration="${state.iteration}">` +
    `labeled ${state.labeled} &middot; unlabeled ${state.unlabeled} &middot; ` +
    `iteration ${state.iteration}${state.complete ? " &middot; complete" : ""}</div>`
  );
}

function renderMentions(mentions: MentionSummary[]): string {
  if (mentions.length === 0) {
    return "";
  }
  const chips = mentions
    .map(
      (m) =>
        `<span class="mention" data-span="${m.span.join(",")}">` +
        `${escapeHtml(m.canonical)} (${escapeHtml(m.type)})</span>`,
    )
    .join(" ");
  return `<div class="mentions">${chips}</div>`;
}

function renderRequirement(id: string, text: string, mentions: MentionSummary[]): string {
  return (
    `<article class="requirement" data-id="${escapeHtml(id)}">` +
    `<h3>${escapeHtml(id)}</h3><p>${escapeHtml(text)}</p>` +
    renderMentions(mentions) +
    `</article>`
  );
}

/** The query form: both texts, the votes, the type radio group (with a
 * direction choice for directed types) and a submit button that is
 * disabled until the selection is valid. */
export function renderQuery(snapshot: SessionSnapshot, pairDetail?: PairView): string {
  if (snapshot.phase === "error") {
    return `<div class="banner error">${escapeHtml(snapshot.lastError ?? "request failed")}</div>`;
  }
  const conflictBanner = snapshot.conflict
    ? `<div class="banner conflict">already labeled elsewhere &mdash; loading the next query</div>`
    : "";
  if (snapshot.phase === "complete") {
    return `${conflictBanner}<div class="banner done">session complete</div>`;
  }
  if (snapshot.phase !== "query" || snapshot.query === null) {
    return `${conflictBanner}<div class="banner waiting">no pending query</div>`;
  }
  const { pair, texts, confidence, votes } = snapshot.query;
  const [a, b] = pair;
  const mentionsFor = (id: string): MentionSummary[] =>
    pairDetail?.parses[id]?.mentions ?? [];
  const typeChoices = ALL_TYPES.map((t) => {
    const checked = snapshot.selection.type === t ? " checked" : "";
    return (
      `<label><input type="radio" name="rtype" value="${t}"${checked}> ${t}` +
      (DIRECTED_TYPES.has(t) ? ` <em>(directed)</em>` : "") +
      `</label>`
    );
  }).join("");
  const needsDirection =
    snapshot.selection.type !== null && DIRECTED_TYPES.has(snapshot.selection.type);
  const direction = needsDirection
    ? `<fieldset class="direction"><legend>direction</legend>` +
      `<label><input type="radio" name="direction" value="source_to_target"` +
      `${snapshot.selection.direction === "source_to_target" ? " checked" : ""}> ` +
      `${escapeHtml(a)} &rarr; ${escapeHtml(b)}</label>` +
      `<label><input type="radio" name="direction" value="target_to_source"` +
      `${snapshot.selection.direction === "target_to_source" ? " checked" : ""}> ` +
      `${escapeHtml(b)} &rarr; ${escapeHtml(a)}</label></fieldset>`
    : "";
  const voteList = votes
    .map((v) => `<li>${escapeHtml(v ?? "abstain")}</li>`)
    .join("");
  return (
    conflictBanner +
    `<section class="query">` +
    renderRequirement(a, texts[a] ?? "", mentionsFor(a)) +
    renderRequirement(b, texts[b] ?? "", mentionsFor(b)) +
    `<div class="votes">confidence ${confidence.toFixed(3)}<ul>${voteList}</ul></div>` +
    `<form class="label-form"><fieldset><legend>relation</legend>${typeChoices}</fieldset>` +
    direction +
    `<button type="submit"${snapshot.submitEnabled ? "" : " disabled"}>submit</button>` +
    `</form></section>`
  );
}

export function renderTable(page: TablePage): string {
  if (page.totalRows === 0) {
    return `<div class="banner empty">no predictions</div>`;
  }
  const rows = page.rows
    .map(
      (p) =>
        `<tr data-source="${escapeHtml(p.source)}" data-target="${escapeHtml(p.target)}">` +
        `<td>${escapeHtml(p.source)}</td><td>${escapeHtml(p.target)}</td>` +
        `<td>${p.type}</td><td>${p.confidence.toFixed(4)}</td>` +
        `<td>${escapeHtml(p.method)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="predictions"><thead><tr>` +
    `<th>source</th><th>target</th><th>type</th><th>confidence</th><th>method</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>` +
    `<nav class="pager">page ${page.page + 1} of ${page.pageCount} (${page.totalRows} rows)</nav>`
  );
}

export function renderPairDetail(view: PairView): string {
  const ids = Object.keys(view.texts);
  const blocks = ids
    .map((id) =>
      renderRequirement(id, view.texts[id] ?? "", view.parses[id]?.mentions ?? []),
    )
    .join("");
  const predictions = view.predictions
    .map(
      (p) =>
        `<li>${escapeHtml(p.run_id)}: ${p.type} @ ${p.confidence.toFixed(4)} ` +
        `(${escapeHtml(p.method)})</li>`,
    )
    .join("");
  return `<section class="pair-detail">${blocks}<ul class="history">${predictions}</ul></section>`;
}
