// DOM wiring: run selector, thumbnail grid, verdict clicks, keyboard
// navigation (arrows move, space toggles), and the live recall chart.

import { ApiClient, Region } from "./api.js";
import { renderChart } from "./chart.js";
import { GalleryState } from "./state.js";

const api = new ApiClient();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function thumbnail(run: string, region: Region): HTMLElement {
  const card = document.createElement("div");
  card.className = `card verdict-${region.verdict}`;
  card.dataset.rank = String(region.rank);
  const img = document.createElement("img");
  img.loading = "lazy";
  img.src = api.cropUrl(run, region.rank);
  img.alt = `rank ${region.rank}`;
  const caption = document.createElement("div");
  caption.className = "caption";
  caption.textContent = `#${region.rank} · ${region.score.toFixed(3)}`;
  card.append(img, caption);
  return card;
}

async function refreshMetrics(run: string): Promise<void> {
  const m = await api.metrics(run);
  renderChart(el("chart"), m.k, m.human, m.auto);
  el("gt-total").textContent = m.gt_total
    ? `${m.gt_total} ground-truth regions`
    : "no ground truth";
}

function main(): void {
  const grid = el("grid");
  const status = el("status");

  const state = new GalleryState(api, {
    onRegionsChanged(regions) {
      grid.innerHTML = "";
      if (!regions.length) {
        grid.innerHTML = `<p class="empty">No regions in this run.</p>`;
        return;
      }
      for (const region of regions) grid.append(thumbnail(state.run, region));
      highlight(0);
    },
    onVerdictChanged(rank, verdict) {
      const card = grid.querySelector<HTMLElement>(`[data-rank="${rank}"]`);
      if (card) card.className = `card verdict-${verdict}`;
      void refreshMetrics(state.run);
    },
    onError(message) {
      status.textContent = message;
      setTimeout(() => (status.textContent = ""), 4000);
    },
    onCursorMoved: highlight,
  });

  function highlight(index: number): void {
    grid.querySelectorAll(".card").forEach((c, i) => {
      c.classList.toggle("focused", i === index);
      if (i === index) c.scrollIntoView({ block: "nearest" });
    });
  }

  grid.addEventListener("click", (ev) => {
    const card = (ev.target as HTMLElement).closest<HTMLElement>(".card");
    if (card?.dataset.rank) void state.toggle(Number(card.dataset.rank));
  });

  document.addEventListener("keydown", (ev) => {
    const cols = 6;
    const moves: Record<string, number> = {
      ArrowLeft: -1,
      ArrowRight: 1,
      ArrowUp: -cols,
      ArrowDown: cols,
    };
    if (ev.key in moves) {
      state.moveCursor(moves[ev.key]);
      ev.preventDefault();
    } else if (ev.key === " ") {
      void state.toggleAtCursor();
      ev.preventDefault();
    }
  });

  const select = el<HTMLSelectElement>("run-select");
  select.addEventListener("change", () => {
    void state.loadRun(select.value).then(() => refreshMetrics(select.value));
  });

  api
    .listRuns()
    .then(({ runs }) => {
      select.innerHTML = runs
        .map((r) => `<option value="${r}">${r}</option>`)
        .join("");
      if (runs.length) {
        select.value = runs[0];
        select.dispatchEvent(new Event("change"));
      } else {
        status.textContent = "no runs found";
      }
    })
    .catch(() => {
      status.textContent = "server unreachable — reload to retry";
    });
}

document.addEventListener("DOMContentLoaded", main);
