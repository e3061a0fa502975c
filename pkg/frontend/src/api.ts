import {
    MapInfo,
    MembersResponse,
    MetricsResult,
    RatioGrid,
    SelectionJson,
    SelectionWithEtag,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
    constructor(message: string, public status: number) {
        super(message);
    }
}

/**
 * Typed client over the serving API. The fetch implementation is injected so
 * tests can run against a stub; metrics responses keep their raw bytes so the
 * UI can display exactly what the server computed.
 */
export class ApiClient {
    constructor(private base: string = "", private fetchImpl: FetchLike = fetch.bind(globalThis)) {}

    private async request(path: string, init?: RequestInit): Promise<Response> {
        const resp = await this.fetchImpl(this.base + path, init);
        if (!resp.ok) {
            let detail = `${resp.status}`;
            try {
                const body = await resp.json();
                if (body && body.error) detail = body.error;
            } catch {
                /* non-JSON error body */
            }
            throw new ApiError(detail, resp.status);
        }
        return resp;
    }

    async mapInfo(): Promise<MapInfo> {
        return (await this.request("/api/map")).json();
    }

    prototypeUrl(i: number, j: number): string {
        return `${this.base}/api/pv/${i}/${j}.png`;
    }

    async members(i: number, j: number, limit = 12): Promise<MembersResponse> {
        return (await this.request(`/api/pv/${i}/${j}/members?limit=${limit}`)).json();
    }

    async metrics(selection: SelectionJson): Promise<MetricsResult> {
        const encoded = encodeURIComponent(JSON.stringify(selection));
        const resp = await this.request(`/api/metrics?sel=${encoded}`);
        const raw = await resp.text();
        return { metrics: JSON.parse(raw), raw };
    }

    async loadSelection(): Promise<SelectionWithEtag> {
        return (await this.request("/api/selection")).json();
    }

    async saveSelection(selection: SelectionJson): Promise<string> {
        const resp = await this.request("/api/selection", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(selection),
        });
        return (await resp.json()).etag;
    }

    async ratio(): Promise<RatioGrid> {
        return (await this.request("/api/ratio")).json();
    }

    async rocCsv(q: number): Promise<string> {
        return (await this.request(`/api/roc?q=${q}`)).text();
    }
}
