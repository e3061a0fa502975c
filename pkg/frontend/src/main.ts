import { ApiClient, ApiError } from "./api.js";
import { debounce } from "./debounce.js";
import { SelectionState } from "./state.js";
import { MapView } from "./view.js";
import { RatioGrid } from "./types.js";

/**
 * Wires the pieces together: load map shape and persisted selection, render
 * the prototype grid, and keep the displayed MDR/FPR in lockstep with the
 * server. Every toggle flips local state immediately and schedules one
 * debounced metrics request plus re-render.
 */
export async function bootstrap(root: HTMLElement, api: ApiClient): Promise<void> {
    let info;
    try {
        info = await api.mapInfo();
    } catch (e) {
        root.innerHTML = "";
        const banner = document.createElement("div");
        banner.className = "banner";
        banner.textContent = "server unreachable ";
        const retry = document.createElement("button");
        retry.textContent = "Retry";
        retry.addEventListener("click", () => void bootstrap(root, api));
        banner.appendChild(retry);
        root.appendChild(banner);
        return;
    }

    const state = new SelectionState(info.m);
    let ratioShown = false;
    let ratioCache: RatioGrid | null = null;

    const refreshMetrics = debounce(async () => {
        try {
            state.setMetrics(await api.metrics(state.toJson()));
            view.hideBanner();
        } catch (e) {
            if (e instanceof ApiError && e.status === 409) {
                state.lastMetrics = null; // no labeled stamps on the server
            } else {
                state.markMetricsStale();
            }
        }
        view.renderMetrics(state);
    }, 150);

    const onChange = () => {
        view.renderSelection(state);
        refreshMetrics();
    };

    const view = new MapView(root, api, info.m, {
        onToggle: (i, j) => {
            state.toggle(i, j);
            onChange();
        },
        onInspect: async (i, j) => {
            try {
                view.renderMembers(i, j, await api.members(i, j));
            } catch (e) {
                view.showBanner(`member lookup failed: ${(e as Error).message}`);
            }
        },
        onSave: async () => {
            try {
                const etag = await api.saveSelection(state.toJson());
                state.markSaved(etag);
                view.renderSelection(state);
            } catch (e) {
                view.showBanner(`save failed: ${(e as Error).message}`);
            }
        },
        onSelectAll: () => {
            state.selectAll();
            onChange();
        },
        onClear: () => {
            state.clear();
            onChange();
        },
        onRatioToggle: async (show) => {
            ratioShown = show;
            if (show && ratioCache === null) {
                try {
                    ratioCache = await api.ratio();
                } catch (e) {
                    view.showBanner(`ratio map unavailable: ${(e as Error).message}`);
                    ratioCache = null;
                }
            }
            view.renderRatio(ratioShown ? ratioCache : null);
        },
        onRetry: () => {
            view.hideBanner();
            refreshMetrics();
        },
    });

    try {
        const persisted = await api.loadSelection();
        state.loadFrom(persisted, persisted.etag);
    } catch {
        /* no persisted selection yet */
    }
    onChange();
}

declare global {
    interface Window {
        pvInspectorBootstrap?: typeof bootstrap;
    }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
    void bootstrap(document.getElementById("app")!, new ApiClient(""));
}
if (typeof window !== "undefined") {
    window.pvInspectorBootstrap = bootstrap;
}
