// Per-stage stopwatches mirroring the study's measurement: each stage's
// clock starts at its first generation request and stops at confirmation, so
// reading time before the first run never counts. Uses a monotonic timer.

import type { SessionView } from './types.js';

export type StageLabel = 'actors' | 'usecases' | 'model' | 'descriptions';

export class StageTimers {
  private openSince = new Map<StageLabel, number>();
  private closedMinutes = new Map<StageLabel, number>();

  constructor(private readonly now: () => number = () => performance.now()) {}

  /** Start the stopwatch for a stage; re-starts while open are ignored. */
  start(label: StageLabel): void {
    if (!this.openSince.has(label)) {
      this.openSince.set(label, this.now());
    }
  }

  /** Stop a stage's stopwatch, accumulating into its total. */
  stop(label: StageLabel): void {
    const since = this.openSince.get(label);
    if (since === undefined) return;
    this.openSince.delete(label);
    const minutes = (this.now() - since) / 60000;
    this.closedMinutes.set(label, (this.closedMinutes.get(label) ?? 0) + minutes);
  }

  isRunning(label: StageLabel): boolean {
    return this.openSince.has(label);
  }

  minutes(label: StageLabel): number {
    const closed = this.closedMinutes.get(label) ?? 0;
    const since = this.openSince.get(label);
    return since === undefined ? closed : closed + (this.now() - since) / 60000;
  }

  totalMinutes(): number {
    const labels: StageLabel[] = ['actors', 'usecases', 'model', 'descriptions'];
    return labels.reduce((sum, label) => sum + this.minutes(label), 0);
  }

  /**
   * Resume from server-persisted records after a reload: closed records seed
   * the accumulated minutes and a still-open record restarts its stopwatch.
   */
  resumeFromSession(session: SessionView): void {
    this.openSince.clear();
    this.closedMinutes.clear();
    for (const record of session.timings) {
      if (record.label === 'total') continue;
      const label = record.label as StageLabel;
      if (record.ended_at === null) {
        this.openSince.set(label, this.now());
      } else if (record.minutes !== null) {
        this.closedMinutes.set(label, (this.closedMinutes.get(label) ?? 0) + record.minutes);
      }
    }
  }
}
