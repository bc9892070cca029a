// Tree view model. Crucial property: this module never computes a truth
// value. Node states come exclusively from a served trace (or reset to
// pending); branches display whatever the backend evaluated, even if a
// hand-crafted trace were internally inconsistent.

import type { RulemapDoc, Trace } from "./api.js";

export type TruthState = "true" | "false" | "skipped" | "pending" | "failed";

export interface NodeView {
  id: string;
  label: string;
  glyph: string; // operator glyph for branches, "?" for leaves
  isLeaf: boolean;
  question: string;
  contextText: string;
  overridable: boolean; // only leaves offer a what-if control
  truth: TruthState;
  evidence: string; // excerpt of the raw answer / predicate explanation
  children: NodeView[];
}

export interface TreeViewModel {
  mapId: string;
  version: number;
  title: string;
  root: NodeView;
  nodes: Map<string, NodeView>;
}

export class StaleTraceError extends Error {
  constructor(viewVersion: number, traceVersion: number) {
    super(
      `trace belongs to version ${traceVersion}, view shows version ${viewVersion}`,
    );
  }
}

const GLYPHS = { all: "∧", any: "∨", one: "⊻" } as const;

export function operatorGlyph(op: "all" | "any" | "one", negated: boolean): string {
  return negated ? `¬${GLYPHS[op]}` : GLYPHS[op];
}

/** Build the display tree from a served canonical document.
 *
 * Throws if the document is not a tree the UI can show one-to-one
 * (missing/duplicate nodes, node reachable twice). */
export function buildViewModel(doc: RulemapDoc): TreeViewModel {
  const byId = new Map<string, (typeof doc.nodes)[number]>();
  for (const node of doc.nodes) {
    if (byId.has(node.id)) throw new Error(`duplicate node id ${node.id}`);
    byId.set(node.id, node);
  }
  const nodes = new Map<string, NodeView>();

  const build = (id: string): NodeView => {
    const raw = byId.get(id);
    if (!raw) throw new Error(`node ${id} referenced but not defined`);
    if (nodes.has(id)) throw new Error(`node ${id} appears more than once`);
    const isLeaf = raw.branch === undefined;
    const view: NodeView = {
      id,
      label: raw.label ?? "",
      glyph: isLeaf ? "?" : operatorGlyph(raw.branch!.op, raw.branch!.negated),
      isLeaf,
      question: raw.question ?? "",
      contextText: raw.context ?? "",
      overridable: isLeaf,
      truth: "pending",
      evidence: "",
      children: [],
    };
    nodes.set(id, view);
    if (raw.branch) {
      view.children = raw.branch.children.map(build);
    }
    return view;
  };

  const root = build(doc.root);
  if (nodes.size !== doc.nodes.length) {
    const shown = new Set(nodes.keys());
    const missing = doc.nodes.filter((n) => !shown.has(n.id)).map((n) => n.id);
    throw new Error(`nodes not reachable from the root: ${missing.join(", ")}`);
  }
  return { mapId: doc.id, version: doc.version, title: doc.title, root, nodes };
}

function excerpt(text: string, limit = 120): string {
  return text.length <= limit ? text : `${text.slice(0, limit - 1)}…`;
}

/** Copy served truth values onto the view, verbatim.
 *
 * A trace for a different map version raises StaleTraceError before any
 * node is touched (no partial render). */
export function applyTrace(view: TreeViewModel, trace: Trace): void {
  if (trace.rulemap_version !== view.version) {
    throw new StaleTraceError(view.version, trace.rulemap_version);
  }
  for (const entry of trace.entries) {
    const node = view.nodes.get(entry.node_id);
    if (!node) continue; // defensive; served traces cover exactly our nodes
    if (entry.value === null) {
      node.truth = "skipped";
    } else if (entry.flags.includes("leaf_failure_defaulted")) {
      node.truth = "failed";
    } else {
      node.truth = entry.value ? "true" : "false";
    }
    node.evidence = excerpt(entry.raw_answer || entry.evidence);
  }
}

export function clearTruth(view: TreeViewModel): void {
  for (const node of view.nodes.values()) {
    node.truth = "pending";
    node.evidence = "";
  }
}

export function renderedStates(view: TreeViewModel): Record<string, TruthState> {
  const out: Record<string, TruthState> = {};
  for (const [id, node] of view.nodes) out[id] = node.truth;
  return out;
}

export type RootBadge = "satisfied" | "not-satisfied" | "pending";

export function rootBadge(view: TreeViewModel): RootBadge {
  switch (view.root.truth) {
    case "true":
      return "satisfied";
    case "false":
      return "not-satisfied";
    default:
      return "pending";
  }
}
