import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api';
import { FakeService } from './fake_service';

const BASE = 'http://svc.test';

describe('ApiClient', () => {
  it('lists the queue with filters and pagination in the query string', async () => {
    const service = new FakeService(45);
    const client = new ApiClient(BASE, service.fetch);
    const response = await client.listQueue({ status: 'pending', reason: 'judge_uncertain' }, 2, 10);
    expect(response.total).toBe(15); // every third of 45
    expect(response.items).toHaveLength(5);
    expect(response.items.every((i) => i.reason === 'judge_uncertain')).toBe(true);
  });

  it('fetches item detail verbatim', async () => {
    const service = new FakeService(3);
    const client = new ApiClient(BASE, service.fetch);
    const detail = await client.getItem('item-1');
    expect(detail.report.c).toBe(0.99);
    expect(detail.report.judge.label).toBe('incorrect');
  });

  it('submits verdicts and surfaces conflicts as ApiError', async () => {
    const service = new FakeService(2);
    const client = new ApiClient(BASE, service.fetch);
    const item = await client.submitVerdict({ item_id: 'item-0', kind: 'accept' });
    expect(item.status).toBe('resolved');
    await expect(client.submitVerdict({ item_id: 'item-0', kind: 'reject' })).rejects.toSatisfy(
      (error: unknown) => error instanceof ApiError && error.isConflict,
    );
  });

  it('maps machine-readable error bodies', async () => {
    const service = new FakeService(1);
    const client = new ApiClient(BASE, service.fetch);
    try {
      await client.getItem('ghost');
      expect.unreachable();
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
      expect((error as ApiError).code).toBe('unknown_item');
      expect((error as ApiError).status).toBe(404);
    }
  });

  it('rejects correction labels outside the option set server-side', async () => {
    const service = new FakeService(1);
    const client = new ApiClient(BASE, service.fetch);
    await expect(
      client.submitVerdict({ item_id: 'item-0', kind: 'correct', new_label: 'Z' }),
    ).rejects.toSatisfy(
      (error: unknown) => error instanceof ApiError && (error as ApiError).code === 'invalid_label',
    );
  });
});
