import { Metrics } from "./types.js";

/** Render the server's rates for display; numbers pass through untouched. */
export function formatMetrics(metrics: Metrics): string {
    return `MDR ${(metrics.mdr * 100).toFixed(1)}% / FPR ${(metrics.fpr * 100).toFixed(1)}%`;
}
