import { MetricsResult, SelectionJson } from "./types.js";

const key = (i: number, j: number) => `${i},${j}`;

/**
 * Client-side selection state: which cells are labeled real, whether that
 * differs from the last persisted version, and the last metrics response
 * verbatim. Metrics are never computed here; the raw server bytes are the
 * single source of truth for every number shown.
 */
export class SelectionState {
    private cells = new Set<string>();
    dirty = false;
    etag: string | null = null;
    lastMetrics: MetricsResult | null = null;
    metricsStale = false;

    constructor(public readonly m: number) {}

    has(i: number, j: number): boolean {
        return this.cells.has(key(i, j));
    }

    count(): number {
        return this.cells.size;
    }

    toggle(i: number, j: number): void {
        if (i < 0 || j < 0 || i >= this.m || j >= this.m) {
            throw new RangeError(`cell (${i}, ${j}) outside ${this.m}x${this.m} map`);
        }
        const k = key(i, j);
        if (this.cells.has(k)) {
            this.cells.delete(k);
        } else {
            this.cells.add(k);
        }
        this.dirty = true;
    }

    selectAll(): void {
        for (let i = 0; i < this.m; i++) {
            for (let j = 0; j < this.m; j++) {
                this.cells.add(key(i, j));
            }
        }
        this.dirty = true;
    }

    clear(): void {
        this.cells.clear();
        this.dirty = true;
    }

    /** Sorted cell list, matching the server's canonical selection layout. */
    toJson(): SelectionJson {
        const selected = [...this.cells]
            .map((k) => k.split(",").map(Number) as [number, number])
            .sort((a, b) => a[0] - b[0] || a[1] - b[1]);
        return { m: this.m, selected };
    }

    loadFrom(selection: SelectionJson, etag: string | null = null): void {
        this.cells.clear();
        for (const [i, j] of selection.selected) {
            this.cells.add(key(i, j));
        }
        this.etag = etag;
        this.dirty = false;
    }

    markSaved(etag: string): void {
        this.etag = etag;
        this.dirty = false;
    }

    setMetrics(result: MetricsResult): void {
        this.lastMetrics = result;
        this.metricsStale = false;
    }

    /** Keep the old numbers visible but flagged when a refresh fails. */
    markMetricsStale(): void {
        this.metricsStale = true;
    }
}
