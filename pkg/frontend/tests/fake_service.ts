// In-memory stand-in implementing the documented review API semantics,
// including first-committed-wins verdicts. Unit tests inject its fetch.

import type { FetchLike } from '../src/api';
import type { QueueItemSummary, ReviewItemDetail } from '../src/types';

export function makeItem(index: number, reason = 'uncertainty_band'): ReviewItemDetail {
  return {
    item_id: `item-${index}`,
    record: {
      prompt_text: `Agent: Are you open?\nUser: reply ${index}\nReply options:\nA. Next?\nB. Bye.`,
      raw_output: 'Looks fine. A',
      parsed_cot: 'Looks fine.',
      parsed_label: 'A',
      valid: true,
      state: 's1',
      options: [
        ['A', 'Next?', 's2'],
        ['B', 'Bye.', 's3'],
      ],
      timed_out: false,
    },
    report: {
      p_gen: 0.5,
      p_disc: 0.5,
      alpha: 0.1,
      c: reason === 'evaluator_disagreement' ? 0.99 : 0.5,
      judge: {
        label: reason === 'evaluator_disagreement' ? 'incorrect' : 'correct',
        rationale: 'fake',
        prompt_version: 'v0',
      },
      routing: { kind: 'human_review', reason },
    },
    reason,
    round: 0,
    status: 'pending',
    verdict: null,
  };
}

export class FakeService {
  items = new Map<string, ReviewItemDetail>();
  requests: { path: string; body?: unknown }[] = [];
  offline = false;

  constructor(count: number) {
    const reasons = ['uncertainty_band', 'evaluator_disagreement', 'judge_uncertain'];
    for (let i = 0; i < count; i++) {
      const item = makeItem(i, reasons[i % reasons.length]);
      this.items.set(item.item_id, item);
    }
  }

  private summary(item: ReviewItemDetail): QueueItemSummary {
    return {
      item_id: item.item_id,
      state: item.record.state,
      reason: item.reason,
      round: item.round,
      status: item.status,
      c: item.report.c,
      judge_label: item.report.judge.label as QueueItemSummary['judge_label'],
    };
  }

  fetch: FetchLike = async (input, init) => {
    if (this.offline) throw new TypeError('fetch failed');
    const url = new URL(input);
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.requests.push({ path: url.pathname, body });

    if (url.pathname === '/review/queue') {
      const status = url.searchParams.get('status') ?? 'pending';
      const reason = url.searchParams.get('reason');
      const page = Number(url.searchParams.get('page') ?? '1');
      const pageSize = Number(url.searchParams.get('page_size') ?? '20');
      let all = [...this.items.values()];
      if (status !== 'all') all = all.filter((i) => i.status === status);
      if (reason) all = all.filter((i) => i.reason === reason);
      const start = (page - 1) * pageSize;
      const counts: Record<string, number> = {};
      for (const item of all) counts[item.reason] = (counts[item.reason] ?? 0) + 1;
      return json(200, {
        items: all.slice(start, start + pageSize).map((i) => this.summary(i)),
        total: all.length,
        page,
        page_size: pageSize,
        counts_by_reason: counts,
      });
    }

    if (url.pathname.startsWith('/review/item/')) {
      const item = this.items.get(url.pathname.split('/').pop()!);
      if (!item) return json(404, { error: { code: 'unknown_item', message: 'no item' } });
      return json(200, item);
    }

    if (url.pathname === '/review/verdict') {
      const request = body as { item_id: string; kind: string; new_label?: string };
      const item = this.items.get(request.item_id);
      if (!item) return json(404, { error: { code: 'unknown_item', message: 'no item' } });
      if (item.status !== 'pending') {
        return json(409, { error: { code: 'conflict', message: 'already resolved' } });
      }
      const labels = item.record.options.map(([label]) => label);
      if (request.kind === 'correct' && !labels.includes(request.new_label ?? '')) {
        return json(422, { error: { code: 'invalid_label', message: 'label outside options' } });
      }
      item.status = 'resolved';
      item.verdict = {
        item_id: item.item_id,
        kind: request.kind as 'accept' | 'reject' | 'correct',
        new_label: request.new_label ?? null,
        annotator: 'fake',
        annotation: null,
        timestamp: 1,
      };
      return json(200, { item: this.summary(item) });
    }

    return json(404, { error: { code: 'not_found', message: url.pathname } });
  };
}

function json(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}
