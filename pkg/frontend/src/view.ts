// DOM projection of the view model. Pure display: node states were already
// decided by applyTrace; this file only mirrors them into elements.

import type { NodeView, TreeViewModel } from "./model.js";
import { rootBadge } from "./model.js";

export interface ViewCallbacks {
  onOverride(leafId: string, value: boolean | undefined): void;
  onEditContext(leafId: string, text: string): void;
}

const STATE_SYMBOL: Record<string, string> = {
  true: "✓",
  false: "✗",
  skipped: "∅",
  pending: "·",
  failed: "⚠",
};

function renderNode(node: NodeView, callbacks: ViewCallbacks): HTMLElement {
  const li = document.createElement("li");
  li.className = `node node-${node.truth}`;
  li.dataset.nodeId = node.id;
  li.dataset.truth = node.truth;

  const head = document.createElement("div");
  head.className = "node-head";
  const glyph = document.createElement("span");
  glyph.className = "glyph";
  glyph.textContent = node.glyph;
  const name = document.createElement("span");
  name.className = "name";
  name.textContent = node.label || node.question || node.id;
  const state = document.createElement("span");
  state.className = "state";
  state.textContent = STATE_SYMBOL[node.truth] ?? "?";
  head.append(glyph, name, state);
  li.append(head);

  if (node.evidence) {
    const evidence = document.createElement("div");
    evidence.className = "evidence";
    evidence.textContent = node.evidence;
    li.append(evidence);
  }

  if (node.overridable) {
    const controls = document.createElement("span");
    controls.className = "override-controls";
    for (const [label, value] of [["ja", true], ["nein", false], ["–", undefined]] as const) {
      const button = document.createElement("button");
      button.textContent = label;
      button.addEventListener("click", () => callbacks.onOverride(node.id, value));
      controls.append(button);
    }
    const edit = document.createElement("button");
    edit.textContent = "Kontext bearbeiten";
    edit.addEventListener("click", () => {
      const text = window.prompt("Kontext", node.contextText);
      if (text !== null) callbacks.onEditContext(node.id, text);
    });
    controls.append(edit);
    li.append(controls);
  }

  if (node.children.length) {
    const ul = document.createElement("ul");
    for (const child of node.children) ul.append(renderNode(child, callbacks));
    li.append(ul);
  }
  return li;
}

export function renderTree(
  container: HTMLElement,
  view: TreeViewModel,
  callbacks: ViewCallbacks,
): void {
  container.replaceChildren();
  const badge = document.createElement("div");
  badge.className = `root-badge badge-${rootBadge(view)}`;
  badge.textContent =
    rootBadge(view) === "satisfied"
      ? "Tatbestand erfüllt"
      : rootBadge(view) === "not-satisfied"
        ? "Tatbestand nicht erfüllt"
        : "Noch nicht geprüft";
  const title = document.createElement("h2");
  title.textContent = `${view.title} (v${view.version})`;
  const ul = document.createElement("ul");
  ul.className = "tree";
  ul.append(renderNode(view.root, callbacks));
  container.append(title, badge, ul);
}

export function showStaleBanner(container: HTMLElement): void {
  const banner = document.createElement("div");
  banner.className = "stale-banner";
  banner.textContent =
    "Der Verlauf stammt von einer älteren Version dieser Rulemap. Bitte neu laden und erneut auswerten.";
  container.prepend(banner);
}
