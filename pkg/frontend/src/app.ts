import { ApiClient, ApiError, seedsToTsv } from "./api.js";
import type { Coverage, NodeDetail, SeedLabel } from "./types.js";
import { renderCoverage, renderNodeDetail, renderSearchResults } from "./views.js";

const CHILD_PAGE = 50;

/** Controller wiring the API client to the three panes. All labels shown
 * come straight from service responses; the UI never infers them. */
export class App {
  private searchInput: HTMLInputElement;
  private searchStatus: HTMLElement;
  private searchResults: HTMLElement;
  private nodePane: HTMLElement;
  private coveragePane: HTMLElement;
  private toast: HTMLElement;

  node: NodeDetail | null = null;
  coverage: Coverage | null = null;
  private busy = false;
  private lastFailed: (() => Promise<void>) | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {
    root.innerHTML = `
      <header>
        <h1>wikiner labeler</h1>
        <button class="export" data-action="export-seeds">export seeds</button>
      </header>
      <div class="columns">
        <aside class="pane search-pane">
          <input data-testid="search-input" type="search"
                 placeholder="search articles and categories" />
          <div class="status" data-testid="search-status"></div>
          <ul class="node-list" data-testid="search-results"></ul>
        </aside>
        <main class="pane node-pane" data-testid="node-pane">
          <p class="empty-state">search for a node to start labeling</p>
        </main>
        <aside class="pane coverage-pane" data-testid="coverage-pane"></aside>
      </div>
      <div class="toast hidden" data-testid="toast"></div>
    `;
    this.searchInput = root.querySelector("[data-testid=search-input]")!;
    this.searchStatus = root.querySelector("[data-testid=search-status]")!;
    this.searchResults = root.querySelector("[data-testid=search-results]")!;
    this.nodePane = root.querySelector("[data-testid=node-pane]")!;
    this.coveragePane = root.querySelector("[data-testid=coverage-pane]")!;
    this.toast = root.querySelector("[data-testid=toast]")!;

    this.searchInput.addEventListener("input", () => {
      void this.search(this.searchInput.value);
    });
    root.addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      const item = target.closest<HTMLElement>("[data-node-id]");
      if (item) {
        void this.selectNode(Number(item.dataset.nodeId));
        return;
      }
      const paletteButton = target.closest<HTMLElement>("button[data-label]");
      if (paletteButton) {
        void this.applyLabel(paletteButton.dataset.label as SeedLabel);
        return;
      }
      const action = target.closest<HTMLElement>("button[data-action]")?.dataset.action;
      if (action === "clear-seed") void this.clearSeed();
      if (action === "load-more") void this.loadMoreChildren();
      if (action === "retry" && this.lastFailed) void this.lastFailed();
      if (action === "export-seeds") void this.exportSeeds();
    });
  }

  async start(): Promise<void> {
    await this.refreshCoverage();
  }

  /** Empty queries clear the pane without touching the network. */
  async search(query: string): Promise<void> {
    if (!query.trim()) {
      this.searchResults.textContent = "";
      this.searchStatus.textContent = "";
      return;
    }
    this.searchStatus.textContent = "searching...";
    try {
      const results = await this.api.searchNodes(query);
      this.searchStatus.textContent = results.length ? "" : "nothing found";
      renderSearchResults(this.searchResults, results);
      this.lastFailed = null;
    } catch (err) {
      this.lastFailed = () => this.search(query);
      this.showRetry(this.searchStatus, err);
    }
  }

  async selectNode(id: number, limit = CHILD_PAGE): Promise<void> {
    try {
      this.node = await this.api.getNode(id, 0, limit);
      renderNodeDetail(this.nodePane, this.node, this.busy);
      this.lastFailed = null;
    } catch (err) {
      this.lastFailed = () => this.selectNode(id, limit);
      this.showRetry(this.nodePane, err);
    }
  }

  /** PUT the seed, then refresh the node and coverage from the service.
   * Re-applying the node's current seed is a visual no-op; in-flight
   * mutations block further clicks. */
  async applyLabel(label: SeedLabel): Promise<void> {
    if (this.node === null || this.busy) return;
    if (this.node.seed === label) return;
    await this.mutate(() => this.api.putSeed(this.node!.id, label));
  }

  async clearSeed(): Promise<void> {
    if (this.node === null || this.busy || this.node.seed === null) return;
    await this.mutate(() => this.api.deleteSeed(this.node!.id));
  }

  private async mutate(action: () => Promise<unknown>): Promise<void> {
    this.busy = true;
    renderNodeDetail(this.nodePane, this.node!, true);
    try {
      await action();
      await this.selectNode(this.node!.id, Math.max(this.node!.children.length, CHILD_PAGE));
      await this.refreshCoverage();
    } catch (err) {
      // rejected mutation: report it and leave the panes as they were
      this.showToast(err);
      renderNodeDetail(this.nodePane, this.node!, false);
    } finally {
      this.busy = false;
      if (this.node) renderNodeDetail(this.nodePane, this.node, false);
    }
  }

  async loadMoreChildren(): Promise<void> {
    if (this.node === null) return;
    await this.selectNode(this.node.id, this.node.children.length + CHILD_PAGE);
  }

  async refreshCoverage(): Promise<void> {
    try {
      this.coverage = await this.api.getCoverage();
      renderCoverage(this.coveragePane, this.coverage);
    } catch (err) {
      this.showRetry(this.coveragePane, err);
      this.lastFailed = () => this.refreshCoverage();
    }
  }

  /** Builds the `node-id TAB label` text; downloads it when the browser
   * supports object URLs (tests just use the returned string). */
  async exportSeeds(): Promise<string> {
    const seeds = await this.api.getSeeds();
    const tsv = seedsToTsv(seeds);
    if (typeof URL !== "undefined" && typeof URL.createObjectURL === "function") {
      const link = document.createElement("a");
      link.href = URL.createObjectURL(new Blob([tsv], { type: "text/tab-separated-values" }));
      link.download = "seeds.tsv";
      link.click();
    }
    return tsv;
  }

  private showRetry(container: HTMLElement, err: unknown): void {
    container.textContent = "";
    const message = document.createElement("p");
    message.className = "error";
    message.textContent = describe(err);
    const retry = document.createElement("button");
    retry.dataset.action = "retry";
    retry.textContent = "retry";
    container.append(message, retry);
  }

  private showToast(err: unknown): void {
    this.toast.textContent = describe(err);
    this.toast.classList.remove("hidden");
    setTimeout(() => this.toast.classList.add("hidden"), 4000);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status ? `request failed (${err.status}): ${err.message}` : err.message;
  }
  return String(err);
}
