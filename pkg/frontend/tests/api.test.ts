import { describe, expect, it } from 'vitest';

import { LatestOnly } from '../src/api.js';

function deferred<T>() {
  let resolve!: (value: T) => void;
  const promise = new Promise<T>((r) => (resolve = r));
  return { promise, resolve };
}

describe('LatestOnly gate', () => {
  it('discards responses that were superseded', async () => {
    const gate = new LatestOnly();
    const slow = deferred<string>();
    const fast = deferred<string>();
    const first = gate.run(() => slow.promise);
    const second = gate.run(() => fast.promise);
    fast.resolve('new');
    slow.resolve('stale');
    expect(await second).toBe('new');
    expect(await first).toBeUndefined();
  });

  it('passes results through when nothing supersedes them', async () => {
    const gate = new LatestOnly();
    expect(await gate.run(async () => 42)).toBe(42);
  });
});
