// Token bucket capping the outbound message rate at 100 Hz. Capacity one
// burst-second; callers drop (not queue) rejected sends, because a newer
// leader state always supersedes an older one.

export class TokenBucket {
  private tokens: number;
  private lastRefillMs: number;

  constructor(
    public readonly ratePerSec: number = 100,
    public readonly capacity: number = 100,
    nowMs: number = 0
  ) {
    this.tokens = capacity;
    this.lastRefillMs = nowMs;
  }

  tryTake(nowMs: number): boolean {
    // a clock that jumps backwards must not mint tokens for time already spent
    const elapsed = Math.max(0, nowMs - this.lastRefillMs) / 1000;
    this.tokens = Math.min(this.capacity, this.tokens + elapsed * this.ratePerSec);
    this.lastRefillMs = Math.max(this.lastRefillMs, nowMs);
    if (this.tokens >= 1) {
      this.tokens -= 1;
      return true;
    }
    return false;
  }
}
