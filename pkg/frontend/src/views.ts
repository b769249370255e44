import { labelColor, PALETTE } from "./palette.js";
import type { Coverage, NodeBrief, NodeDetail, Resolution } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function labelChip(label: string | null, suffix = ""): HTMLElement {
  const chip = el("span", "chip", label === null ? "unlabeled" : label + suffix);
  chip.style.backgroundColor = labelColor(label);
  if (label === null) chip.classList.add("chip-empty");
  return chip;
}

export function nodeListItem(node: NodeBrief): HTMLElement {
  const item = el("li", "node-item");
  item.dataset.nodeId = String(node.id);
  item.appendChild(el("span", "node-title", node.title));
  item.appendChild(el("span", `badge badge-${node.kind}`, node.kind));
  if (node.seed !== null) {
    item.appendChild(labelChip(node.seed, " (seed)"));
  } else {
    item.appendChild(labelChip(node.resolved));
  }
  return item;
}

export function renderSearchResults(container: HTMLElement, results: NodeBrief[]): void {
  container.textContent = "";
  if (!results.length) {
    container.appendChild(el("li", "empty-state", "no matching nodes"));
    return;
  }
  for (const node of results) container.appendChild(nodeListItem(node));
}

export function renderExplanation(res: Resolution, seed: string | null): HTMLElement {
  const box = el("section", "explanation");
  box.dataset.testid = "explanation";
  box.appendChild(el("h3", "", "Why this label?"));
  if (seed !== null) {
    box.appendChild(el("p", "", `Seed: this node is directly labeled ${seed}.`));
    return box;
  }
  if (res.provenance === null) {
    box.appendChild(el("p", "", "Unlabeled: no seeded ancestor reaches this node."));
    return box;
  }
  const shown = res.label === null ? "none (excluded)" : res.label;
  const paths = res.path_count === 1 ? "1 shortest path" : `${res.path_count} shortest paths`;
  box.appendChild(
    el(
      "p",
      "",
      `Inherited ${shown} from a seeded ancestor at distance ${res.distance} over ${paths}.`,
    ),
  );
  const competitors = Object.entries(res.competitors).sort((a, b) => b[1] - a[1]);
  if (competitors.length > 1) {
    box.appendChild(
      el("p", "note", "Several labels reached this node at the same distance:"),
    );
    const list = el("ul", "competitors");
    for (const [label, count] of competitors) {
      const row = el("li", "", `${label}: ${count} path${count === 1 ? "" : "s"}`);
      row.prepend(labelChip(label === "none" ? null : label));
      list.appendChild(row);
    }
    box.appendChild(list);
    box.appendChild(
      el("p", "note", "Ties resolve by path frequency, then the fixed category order."),
    );
  }
  return box;
}

export function renderNodeDetail(container: HTMLElement, node: NodeDetail, busy: boolean): void {
  container.textContent = "";
  const head = el("h2", "node-head", node.title + " ");
  head.appendChild(el("span", `badge badge-${node.kind}`, node.kind));
  container.appendChild(head);

  const line = el("div", "resolved-line");
  if (node.seed !== null) {
    line.appendChild(labelChip(node.seed, " (seed)"));
  } else {
    line.appendChild(labelChip(node.resolved));
    if (node.resolution.provenance === "inherited") {
      line.appendChild(
        el("span", "provenance", ` inherited, distance ${node.resolution.distance}`),
      );
    }
  }
  container.appendChild(line);

  const palette = el("div", "palette");
  palette.dataset.testid = "palette";
  for (const label of PALETTE) {
    const button = el("button", "palette-button", label);
    button.dataset.label = label;
    button.disabled = busy;
    if (node.seed === label) button.classList.add("active-seed");
    button.style.borderColor = labelColor(label);
    palette.appendChild(button);
  }
  const clear = el("button", "palette-button clear-seed", "clear seed");
  clear.dataset.action = "clear-seed";
  clear.disabled = busy || node.seed === null;
  palette.appendChild(clear);
  container.appendChild(palette);

  container.appendChild(renderExplanation(node.resolution, node.seed));

  const parents = el("section", "parents");
  parents.appendChild(el("h3", "", `Parents (${node.parents.length})`));
  const plist = el("ul", "node-list");
  for (const p of node.parents) plist.appendChild(nodeListItem(p));
  if (!node.parents.length) plist.appendChild(el("li", "empty-state", "top of the hierarchy"));
  parents.appendChild(plist);
  container.appendChild(parents);

  const children = el("section", "children");
  children.dataset.testid = "children";
  children.appendChild(el("h3", "", `Children (${node.children_total})`));
  const clist = el("ul", "node-list");
  for (const c of node.children) clist.appendChild(nodeListItem(c));
  if (!node.children_total) clist.appendChild(el("li", "empty-state", "no children"));
  children.appendChild(clist);
  if (node.children.length < node.children_total) {
    const more = el("button", "load-more", "load more children");
    more.dataset.action = "load-more";
    children.appendChild(more);
  }
  container.appendChild(children);
}

export function renderCoverage(container: HTMLElement, coverage: Coverage): void {
  container.textContent = "";
  container.appendChild(el("h3", "", "Coverage"));
  container.appendChild(
    el(
      "p",
      "coverage-line",
      `${coverage.articles_labeled} of ${coverage.articles_total} articles labeled ` +
        `(${coverage.percent_labeled.toFixed(1)}%)`,
    ),
  );
  const list = el("ul", "coverage-counts");
  for (const [label, count] of Object.entries(coverage.label_counts)) {
    if (!count) continue;
    const row = el("li", "", ` ${count}`);
    row.prepend(labelChip(label === "none" ? null : label));
    list.appendChild(row);
  }
  container.appendChild(list);

  const conflicts = el("div", "conflicts");
  conflicts.dataset.testid = "conflicts";
  conflicts.appendChild(el("h3", "", `Conflicts (${coverage.conflicts.length})`));
  const clist = el("ul", "node-list");
  for (const conflict of coverage.conflicts) {
    const row = el("li", "node-item conflict");
    row.dataset.nodeId = String(conflict.id);
    row.appendChild(el("span", "node-title", conflict.title));
    const labels = Object.entries(conflict.competitors)
      .map(([l, c]) => `${l}:${c}`)
      .join(" vs ");
    row.appendChild(el("span", "conflict-labels", labels));
    clist.appendChild(row);
  }
  if (!coverage.conflicts.length) {
    clist.appendChild(el("li", "empty-state", "no tie-broken nodes"));
  }
  conflicts.appendChild(clist);
  container.appendChild(conflicts);
}
