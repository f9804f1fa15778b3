/** DOM rendering for the triage gallery; no state lives here. */

import { Candidate } from "./api.js";
import { TriageView } from "./state.js";

function formatScore(value: number | null | undefined, digits = 3): string {
  if (value === null || value === undefined) {
    return "-";
  }
  return Number(value).toFixed(digits);
}

function badge(label: string, value: string): HTMLElement {
  const el = document.createElement("span");
  el.className = "badge";
  el.textContent = `${label} ${value}`;
  return el;
}

function card(item: Candidate, focused: boolean, index: number): HTMLElement {
  const el = document.createElement("div");
  el.className = "card";
  el.dataset.id = item.id;
  el.dataset.index = String(index);
  el.dataset.testid = "card";
  if (item.verdict === "accept") {
    el.classList.add("accepted");
  } else if (item.verdict === "reject") {
    el.classList.add("rejected");
  }
  if (focused) {
    el.classList.add("focused");
  }

  const img = document.createElement("img");
  img.src = item.thumbnail_url;
  img.alt = item.id;
  img.loading = "lazy";
  el.appendChild(img);

  const badges = document.createElement("div");
  badges.className = "badges";
  badges.appendChild(badge("bv", formatScore(item.scores.border_variance, 1)));
  badges.appendChild(badge("ts", formatScore(item.scores.transparency_score)));
  badges.appendChild(badge("cx", formatScore(item.scores.convexity_score)));
  el.appendChild(badges);

  const caption = document.createElement("div");
  caption.className = "caption";
  caption.textContent = item.id.slice(0, 16);
  if (item.verdict) {
    const verdict = document.createElement("span");
    verdict.className = "verdict";
    verdict.dataset.testid = "verdict";
    verdict.textContent = item.verdict;
    caption.appendChild(verdict);
  }
  el.appendChild(caption);
  return el;
}

export function render(view: TriageView, root: HTMLElement): void {
  root.textContent = "";

  const header = document.createElement("header");
  const title = document.createElement("h1");
  title.textContent = "synthset review";
  header.appendChild(title);

  const progress = document.createElement("div");
  progress.className = "progress";
  progress.dataset.testid = "progress";
  progress.textContent = `${view.decided} / ${view.totalCandidates} decided`;
  header.appendChild(progress);

  const filter = document.createElement("div");
  filter.className = "filter";
  filter.dataset.testid = "filter";
  filter.textContent = view.filter === "undecided" ? "showing: undecided" : "showing: all";
  header.appendChild(filter);

  const keys = document.createElement("div");
  keys.className = "keys";
  keys.textContent = "A accept · R reject · U undecided filter · arrows move · N/P page";
  header.appendChild(keys);
  root.appendChild(header);

  if (view.offline || view.pendingCount > 0) {
    const banner = document.createElement("div");
    banner.className = "banner";
    banner.dataset.testid = "banner";
    banner.textContent = view.offline
      ? `offline: ${view.pendingCount} verdict(s) queued, retrying...`
      : `syncing ${view.pendingCount} verdict(s)...`;
    root.appendChild(banner);
  }

  if (view.guidance) {
    const guidance = document.createElement("p");
    guidance.className = "guidance";
    guidance.textContent = view.guidance;
    root.appendChild(guidance);
  }

  const grid = document.createElement("div");
  grid.className = "grid";
  grid.dataset.testid = "grid";
  view.items.forEach((item, index) => {
    grid.appendChild(card(item, index === view.cursor, index));
  });
  if (view.items.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.dataset.testid = "empty";
    empty.textContent = view.filter === "undecided" ? "nothing left to review" : "no candidates";
    grid.appendChild(empty);
  }
  root.appendChild(grid);

  const pager = document.createElement("footer");
  pager.className = "pager";
  pager.textContent = `page ${view.page} · ${view.total} candidate(s) in view`;
  root.appendChild(pager);
}
