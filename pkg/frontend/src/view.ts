import { ApiClient } from "./api.js";
import { formatMetrics } from "./format.js";
import { SelectionState } from "./state.js";
import { MembersResponse, RatioGrid } from "./types.js";

export interface ViewCallbacks {
    onToggle: (i: number, j: number) => void;
    onInspect: (i: number, j: number) => void;
    onSave: () => void;
    onSelectAll: () => void;
    onClear: () => void;
    onRatioToggle: (show: boolean) => void;
    onRetry: () => void;
}

/** DOM rendering for the map grid, metrics readout and member panel. */
export class MapView {
    private tiles: HTMLElement[][] = [];
    private root: HTMLElement;

    constructor(
        root: HTMLElement,
        private api: ApiClient,
        private m: number,
        private callbacks: ViewCallbacks,
    ) {
        this.root = root;
        this.build();
    }

    private el<K extends keyof HTMLElementTagNameMap>(
        tag: K,
        cls?: string,
        parent?: HTMLElement,
    ): HTMLElementTagNameMap[K] {
        const node = document.createElement(tag);
        if (cls) node.className = cls;
        (parent ?? this.root).appendChild(node);
        return node;
    }

    private build(): void {
        this.root.innerHTML = "";
        const bar = this.el("div", "toolbar");
        const save = this.el("button", "save", bar);
        save.textContent = "Save selection";
        save.addEventListener("click", () => this.callbacks.onSave());
        const all = this.el("button", "", bar);
        all.textContent = "Select all";
        all.addEventListener("click", () => this.callbacks.onSelectAll());
        const none = this.el("button", "", bar);
        none.textContent = "Clear";
        none.addEventListener("click", () => this.callbacks.onClear());
        const ratioLabel = this.el("label", "ratio-toggle", bar);
        const ratioBox = this.el("input", "", ratioLabel);
        ratioBox.type = "checkbox";
        ratioBox.addEventListener("change", () => this.callbacks.onRatioToggle(ratioBox.checked));
        ratioLabel.appendChild(document.createTextNode(" ratio overlay"));
        this.el("span", "metrics", bar).id = "metrics";
        this.el("span", "status", bar).id = "status";

        const banner = this.el("div", "banner hidden");
        banner.id = "banner";
        const retry = this.el("button", "", banner);
        retry.textContent = "Retry";
        retry.addEventListener("click", () => this.callbacks.onRetry());

        const wrap = this.el("div", "layout");
        const grid = this.el("div", "grid", wrap);
        grid.style.gridTemplateColumns = `repeat(${this.m}, 1fr)`;
        for (let i = 0; i < this.m; i++) {
            const row: HTMLElement[] = [];
            for (let j = 0; j < this.m; j++) {
                const cell = this.el("div", "cell", grid);
                const img = this.el("img", "", cell) as HTMLImageElement;
                img.src = this.api.prototypeUrl(i, j);
                img.alt = `prototype ${i},${j}`;
                img.draggable = false;
                cell.addEventListener("click", () => this.callbacks.onToggle(i, j));
                cell.addEventListener("contextmenu", (e) => {
                    e.preventDefault();
                    this.callbacks.onInspect(i, j);
                });
                row.push(cell);
            }
            this.tiles.push(row);
        }
        this.el("div", "panel", wrap).id = "panel";
    }

    renderSelection(state: SelectionState): void {
        for (let i = 0; i < this.m; i++) {
            for (let j = 0; j < this.m; j++) {
                this.tiles[i][j].classList.toggle("selected", state.has(i, j));
            }
        }
        const status = document.getElementById("status")!;
        status.textContent = state.dirty ? "unsaved changes" : "saved";
        status.classList.toggle("dirty", state.dirty);
    }

    /** Shows the server's numbers only; raw bytes ride along in data-raw. */
    renderMetrics(state: SelectionState): void {
        const target = document.getElementById("metrics")!;
        if (!state.lastMetrics) {
            target.textContent = "";
            target.removeAttribute("data-raw");
            return;
        }
        target.textContent = formatMetrics(state.lastMetrics.metrics);
        target.setAttribute("data-raw", state.lastMetrics.raw);
        target.classList.toggle("stale", state.metricsStale);
    }

    renderRatio(grid: RatioGrid | null): void {
        for (let i = 0; i < this.m; i++) {
            for (let j = 0; j < this.m; j++) {
                const tile = this.tiles[i][j];
                tile.classList.remove("no-data");
                tile.style.removeProperty("--heat");
                if (grid === null) continue;
                const v = grid[i][j];
                if (v === null) {
                    tile.classList.add("no-data");
                } else {
                    // log-ish scale squashed into [0, 1] for the overlay tint
                    tile.style.setProperty("--heat", String(Math.min(1, v / 4)));
                }
            }
        }
    }

    renderMembers(i: number, j: number, members: MembersResponse): void {
        const panel = document.getElementById("panel")!;
        panel.innerHTML = "";
        const head = document.createElement("h3");
        head.textContent = `cell (${i}, ${j}): ${members.count} members`;
        panel.appendChild(head);
        if (members.count === 0) {
            const none = document.createElement("p");
            none.textContent = "no members";
            panel.appendChild(none);
            return;
        }
        const hist = document.createElement("p");
        hist.textContent = Object.entries(members.labels)
            .map(([k, v]) => `${k}: ${v}`)
            .join(", ");
        panel.appendChild(hist);
        const strip = document.createElement("div");
        strip.className = "thumbs";
        for (const b64 of members.stamps) {
            const img = document.createElement("img");
            img.src = `data:image/png;base64,${b64}`;
            strip.appendChild(img);
        }
        panel.appendChild(strip);
    }

    showBanner(message: string): void {
        const banner = document.getElementById("banner")!;
        banner.classList.remove("hidden");
        banner.childNodes.forEach((n) => {
            if (n.nodeType === Node.TEXT_NODE) banner.removeChild(n);
        });
        banner.insertBefore(document.createTextNode(message + " "), banner.firstChild);
        document.getElementById("metrics")!.textContent = "";
    }

    hideBanner(): void {
        document.getElementById("banner")!.classList.add("hidden");
    }
}
