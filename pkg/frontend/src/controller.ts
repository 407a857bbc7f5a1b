import { ApiClient, ApiError } from './api';
import type { QueueFilters, QueueItemSummary, ReviewItemDetail, VerdictKind } from './types';

export const PAGE_SIZE = 20;

export interface SubmitOutcome {
  ok: boolean;
  conflict?: boolean;
  message?: string;
}

/**
 * DOM-free triage state machine. The view layer only renders this state and
 * forwards user intents; every write goes through the service API.
 */
export class QueueController {
  filters: QueueFilters = { status: 'pending' };
  page = 1;
  pageSize = PAGE_SIZE;
  items: QueueItemSummary[] = [];
  total = 0;
  countsByReason: Record<string, number> = {};
  selectedIndex = -1;
  detail: ReviewItemDetail | null = null;
  connectionError: string | null = null;
  lastConfirmation: string | null = null;

  constructor(private readonly api: ApiClient, private readonly annotator = 'console') {}

  get totalPages(): number {
    return Math.max(1, Math.ceil(this.total / this.pageSize));
  }

  get isEmpty(): boolean {
    return this.total === 0 && this.connectionError === null;
  }

  /** Verdict controls are enabled exactly when the open item is pending. */
  get verdictEnabled(): boolean {
    return this.detail !== null && this.detail.status === 'pending';
  }

  async loadQueue(): Promise<void> {
    try {
      const response = await this.api.listQueue(this.filters, this.page, this.pageSize);
      this.items = response.items;
      this.total = response.total;
      this.countsByReason = response.counts_by_reason;
      this.connectionError = null;
      if (this.selectedIndex >= this.items.length) {
        this.selectedIndex = this.items.length - 1;
      }
    } catch (error) {
      // no data fabrication: keep whatever was last loaded and show the banner
      this.connectionError = error instanceof Error ? error.message : String(error);
    }
  }

  async setFilters(filters: QueueFilters): Promise<void> {
    this.filters = filters;
    this.page = 1;
    await this.loadQueue();
  }

  async goToPage(page: number): Promise<void> {
    this.page = Math.min(Math.max(1, page), this.totalPages);
    await this.loadQueue();
  }

  selectNext(): void {
    if (this.items.length === 0) return;
    this.selectedIndex = Math.min(this.selectedIndex + 1, this.items.length - 1);
  }

  selectPrevious(): void {
    if (this.items.length === 0) return;
    this.selectedIndex = Math.max(this.selectedIndex - 1, 0);
  }

  async openSelected(): Promise<void> {
    const summary = this.items[this.selectedIndex];
    if (summary) await this.openItem(summary.item_id);
  }

  async openItem(itemId: string): Promise<void> {
    try {
      this.detail = await this.api.getItem(itemId);
      this.connectionError = null;
    } catch (error) {
      this.connectionError = error instanceof Error ? error.message : String(error);
    }
  }

  optionLabels(): string[] {
    if (!this.detail) return [];
    return this.detail.record.options.map(([label]) => label);
  }

  /**
   * Submit a verdict for the open item. Correction labels are checked against
   * the item's option letters before any request leaves the console; the
   * server enforces the same rule.
   */
  async submit(kind: VerdictKind, newLabel?: string, annotation?: string): Promise<SubmitOutcome> {
    if (!this.detail) return { ok: false, message: 'no item open' };
    if (!this.verdictEnabled) {
      return { ok: false, conflict: true, message: 'item is no longer pending' };
    }
    if (kind === 'correct') {
      if (!newLabel || !this.optionLabels().includes(newLabel)) {
        return {
          ok: false,
          message: `label ${newLabel ?? '(none)'} is not among options ${this.optionLabels().join(', ')}`,
        };
      }
    }
    try {
      const item = await this.api.submitVerdict({
        item_id: this.detail.item_id,
        kind,
        new_label: newLabel,
        annotator: this.annotator,
        annotation,
      });
      this.lastConfirmation = `${item.item_id}: ${kind} committed`;
      await this.openItem(item.item_id); // reflect resolved status, disable controls
      await this.loadQueue();
      return { ok: true };
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        await this.openItem(this.detail.item_id); // resolved elsewhere: refresh, disable
        return { ok: false, conflict: true, message: error.message };
      }
      const message = error instanceof Error ? error.message : String(error);
      return { ok: false, message };
    }
  }
}
