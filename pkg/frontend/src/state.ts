// Gallery view state: rank-ordered regions, verdict cycling with optimistic
// updates that revert on a rejected POST, and keyboard cursor movement.

import { ApiClient, Region, Verdict } from "./api.js";

const CYCLE: Record<Verdict, Verdict> = {
  unlabeled: "true",
  true: "false",
  false: "unlabeled",
};

export function nextVerdict(v: Verdict): Verdict {
  return CYCLE[v];
}

export interface GalleryEvents {
  onRegionsChanged?(regions: Region[]): void;
  onVerdictChanged?(rank: number, verdict: Verdict): void;
  onError?(message: string): void;
  onCursorMoved?(index: number): void;
}

export class GalleryState {
  regions: Region[] = [];
  run = "";
  cursor = -1;

  constructor(
    private api: ApiClient,
    private events: GalleryEvents = {},
  ) {}

  async loadRun(run: string): Promise<void> {
    const body = await this.api.regions(run);
    // server rank order is authoritative; never reorder locally
    this.regions = [...body.regions].sort((a, b) => a.rank - b.rank);
    this.run = run;
    this.cursor = this.regions.length ? 0 : -1;
    this.events.onRegionsChanged?.(this.regions);
  }

  regionAt(rank: number): Region | undefined {
    return this.regions.find((r) => r.rank === rank);
  }

  async toggle(rank: number): Promise<void> {
    const region = this.regionAt(rank);
    if (!region) return;
    const previous = region.verdict;
    const wanted = nextVerdict(previous);
    region.verdict = wanted; // optimistic
    this.events.onVerdictChanged?.(rank, wanted);
    try {
      const acknowledged = await this.api.label(this.run, rank, wanted);
      if (acknowledged !== wanted) {
        region.verdict = acknowledged;
        this.events.onVerdictChanged?.(rank, acknowledged);
      }
    } catch (err) {
      region.verdict = previous; // rejected: revert
      this.events.onVerdictChanged?.(rank, previous);
      this.events.onError?.(`label failed: ${String(err)}`);
    }
  }

  moveCursor(delta: number): void {
    if (!this.regions.length) return;
    const next = Math.min(
      Math.max(this.cursor + delta, 0),
      this.regions.length - 1,
    );
    if (next !== this.cursor) {
      this.cursor = next;
      this.events.onCursorMoved?.(next);
    }
  }

  async toggleAtCursor(): Promise<void> {
    if (this.cursor >= 0 && this.cursor < this.regions.length) {
      await this.toggle(this.regions[this.cursor].rank);
    }
  }
}
