/**
 * Triage state machine: keyboard-driven single-focus review.
 *
 * All mutations run through one serialized async chain, so rapid keystrokes
 * cannot interleave. Verdicts are applied optimistically, queued, and
 * retried until the API acknowledges them; after every drain the page is
 * refreshed from the server, which stays authoritative.
 */

import { ApiClient, Candidate, Verdict } from "./api.js";

export type Filter = "all" | "undecided";

export interface PendingDecision {
  candidateId: string;
  verdict: Verdict;
}

export interface TriageView {
  items: Candidate[];
  cursor: number;
  filter: Filter;
  page: number;
  total: number;
  totalCandidates: number;
  decided: number;
  offline: boolean;
  pendingCount: number;
  guidance: string;
}

export interface ControllerOptions {
  pageSize?: number;
  reviewer?: string;
  retryDelayMs?: number;
  onChange?: (view: TriageView) => void;
  /** injectable for tests; defaults to setTimeout */
  scheduler?: (fn: () => void, ms: number) => void;
}

export class TriageController {
  private items: Candidate[] = [];
  private cursor = 0;
  private filter: Filter = "all";
  private page = 1;
  private total = 0;
  private totalCandidates = 0;
  private undecided = 0;
  private offline = false;
  private guidance = "";
  private pending: PendingDecision[] = [];
  private retryScheduled = false;
  private chain: Promise<void> = Promise.resolve();

  private readonly pageSize: number;
  private readonly reviewer: string;
  private readonly retryDelayMs: number;
  private readonly onChange: (view: TriageView) => void;
  private readonly scheduler: (fn: () => void, ms: number) => void;

  constructor(
    private readonly api: ApiClient,
    options: ControllerOptions = {},
  ) {
    this.pageSize = options.pageSize ?? 50;
    this.reviewer = options.reviewer ?? "reviewer";
    this.retryDelayMs = options.retryDelayMs ?? 2000;
    this.onChange = options.onChange ?? (() => undefined);
    this.scheduler = options.scheduler ?? ((fn, ms) => setTimeout(fn, ms));
  }

  view(): TriageView {
    return {
      items: this.items,
      cursor: this.cursor,
      filter: this.filter,
      page: this.page,
      total: this.total,
      totalCandidates: this.totalCandidates,
      decided: this.totalCandidates - this.undecided,
      offline: this.offline,
      pendingCount: this.pending.length,
      guidance: this.guidance,
    };
  }

  /** resolves when every queued action (and its flush) has settled */
  whenIdle(): Promise<void> {
    return this.chain;
  }

  load(): Promise<void> {
    return this.enqueueOp(() => this.refresh());
  }

  handleKey(key: string): Promise<void> {
    switch (key.toLowerCase()) {
      case "a":
        return this.enqueueOp(() => this.decide("accept"));
      case "r":
        return this.enqueueOp(() => this.decide("reject"));
      case "u":
        return this.enqueueOp(async () => {
          this.filter = this.filter === "undecided" ? "all" : "undecided";
          this.page = 1;
          this.cursor = 0;
          await this.refresh();
        });
      case "arrowright":
      case "l":
        return this.enqueueOp(async () => this.moveCursor(1));
      case "arrowleft":
      case "h":
        return this.enqueueOp(async () => this.moveCursor(-1));
      case "n":
        return this.enqueueOp(() => this.turnPage(1));
      case "p":
        return this.enqueueOp(() => this.turnPage(-1));
      default:
        return this.chain;
    }
  }

  moveCursorTo(index: number): Promise<void> {
    return this.enqueueOp(async () => {
      if (this.items.length > 0) {
        this.cursor = Math.max(0, Math.min(index, this.items.length - 1));
      }
      this.emit();
    });
  }

  private enqueueOp(op: () => Promise<void>): Promise<void> {
    this.chain = this.chain.then(op, op);
    return this.chain;
  }

  private emit(): void {
    this.onChange(this.view());
  }

  private clampCursor(): void {
    if (this.items.length === 0) {
      this.cursor = 0;
    } else {
      this.cursor = Math.max(0, Math.min(this.cursor, this.items.length - 1));
    }
  }

  private async refresh(): Promise<void> {
    try {
      const status = this.filter === "undecided" ? "undecided" : "";
      const page = await this.api.listCandidates(status, this.page, this.pageSize);
      this.items = page.items;
      this.total = page.total;
      this.totalCandidates = page.total_candidates;
      this.undecided = page.undecided;
      this.guidance = page.guidance ?? "";
      this.offline = false;
      this.clampCursor();
    } catch {
      this.offline = true;
    }
    this.emit();
  }

  private moveCursor(delta: number): void {
    this.cursor += delta;
    this.clampCursor();
    this.emit();
  }

  private async turnPage(delta: number): Promise<void> {
    const lastPage = Math.max(1, Math.ceil(this.total / this.pageSize));
    const next = Math.max(1, Math.min(this.page + delta, lastPage));
    if (next !== this.page) {
      this.page = next;
      this.cursor = 0;
      await this.refresh();
    }
  }

  private async decide(verdict: Verdict): Promise<void> {
    const item = this.items[this.cursor];
    if (!item) {
      return;
    }
    item.verdict = verdict; // optimistic; reconciled on refresh
    this.pending.push({ candidateId: item.id, verdict });
    if (this.filter === "all") {
      this.moveCursor(1);
    }
    this.emit();
    await this.flush();
  }

  /** drain the queue head-first; on failure go offline and retry later */
  async flush(): Promise<void> {
    let acknowledged = 0;
    while (this.pending.length > 0) {
      const head = this.pending[0];
      try {
        await this.api.postDecision(head.candidateId, head.verdict, this.reviewer);
        this.pending.shift();
        acknowledged += 1;
        this.offline = false;
      } catch {
        this.offline = true;
        this.emit();
        if (!this.retryScheduled) {
          this.retryScheduled = true;
          this.scheduler(() => {
            this.retryScheduled = false;
            this.enqueueOp(() => this.flush());
          }, this.retryDelayMs);
        }
        return;
      }
    }
    if (acknowledged > 0) {
      await this.refresh();
    } else {
      this.emit();
    }
  }
}
