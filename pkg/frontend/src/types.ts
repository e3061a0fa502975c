export interface MapInfo {
    m: number;
    d: number;
}

export interface Metrics {
    mdr: number;
    fpr: number;
}

/** Parsed metrics plus the exact bytes the server sent. */
export interface MetricsResult {
    metrics: Metrics;
    raw: string;
}

export interface SelectionJson {
    m: number;
    selected: [number, number][];
}

export interface SelectionWithEtag extends SelectionJson {
    etag: string;
}

export interface MembersResponse {
    count: number;
    labels: Record<string, number>;
    stamps: string[]; // base64 PNG thumbnails
}

export type RatioGrid = (number | null)[][];
