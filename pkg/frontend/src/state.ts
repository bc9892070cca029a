// Case-run panel state and the edit workflows. All persistence goes through
// the service API; structural edits produce a new canonical document that is
// PUT back with optimistic concurrency.

import type { EvaluateRequest, RulemapApi, RulemapDoc, Trace } from "./api.js";
import { applyTrace, buildViewModel, type TreeViewModel } from "./model.js";

export interface CaseRunPanelState {
  caseText: string;
  caseId: string;
  mode: "full" | "short";
  overrides: Map<string, boolean>;
  lastTrace?: Trace;
  beforeTrace?: Trace; // pre-edit trace kept for side-by-side comparison
}

export function newCaseRunPanel(): CaseRunPanelState {
  return { caseText: "", caseId: "ui-case", mode: "full", overrides: new Map() };
}

/** Only leaves carry an override affordance; branch ids are rejected. */
export function setOverride(
  panel: CaseRunPanelState,
  view: TreeViewModel,
  leafId: string,
  value: boolean,
): void {
  const node = view.nodes.get(leafId);
  if (!node) throw new Error(`unknown node ${leafId}`);
  if (!node.overridable) throw new Error(`node ${leafId} is a branch; no override control`);
  panel.overrides.set(leafId, value);
}

export function clearOverride(panel: CaseRunPanelState, leafId: string): void {
  panel.overrides.delete(leafId);
}

export function clearOverrides(panel: CaseRunPanelState): void {
  panel.overrides.clear();
}

/** Evaluate the panel's case; the returned trace is already applied to the
 * view (or StaleTraceError is thrown and nothing is rendered). */
export async function runCase(
  api: RulemapApi,
  view: TreeViewModel,
  panel: CaseRunPanelState,
): Promise<Trace> {
  const request: EvaluateRequest = {
    case_text: panel.caseText,
    case_id: panel.caseId,
    mode: panel.mode,
    overrides: Object.fromEntries(panel.overrides),
  };
  const trace = await api.evaluate(view.mapId, request);
  applyTrace(view, trace);
  panel.lastTrace = trace;
  return trace;
}

export interface ContextEditResult {
  view: TreeViewModel; // rebuilt for the new stored version
  version: number;
  before?: Trace;
  after?: Trace;
}

/** Save new leaf context, reload the map, and (when a case was run before)
 * re-run it so before/after traces can be shown side by side. */
export async function editContextAndRerun(
  api: RulemapApi,
  view: TreeViewModel,
  panel: CaseRunPanelState,
  nodeId: string,
  newText: string,
): Promise<ContextEditResult> {
  const saved = await api.putLeafContext(view.mapId, nodeId, newText);
  const fresh = buildViewModel(await api.getRulemap(view.mapId));
  const before = panel.lastTrace;
  let after: Trace | undefined;
  if (before && panel.caseText) {
    panel.beforeTrace = before;
    after = await runCase(api, fresh, panel);
  }
  return { view: fresh, version: saved.version, before, after };
}

// ---------------------------------------------------------------------------
// Minimal structural editing on canonical documents. Every helper returns a
// new document; the caller PUTs it (If-Match the base version) and reloads.

function cloneDoc(doc: RulemapDoc): RulemapDoc {
  return JSON.parse(JSON.stringify(doc)) as RulemapDoc;
}

function findNode(doc: RulemapDoc, id: string) {
  const node = doc.nodes.find((n) => n.id === id);
  if (!node) throw new Error(`unknown node ${id}`);
  return node;
}

export function addLeaf(
  doc: RulemapDoc,
  parentId: string,
  id: string,
  question: string,
): RulemapDoc {
  const out = cloneDoc(doc);
  if (out.nodes.some((n) => n.id === id)) throw new Error(`id ${id} already used`);
  const parent = findNode(out, parentId);
  if (!parent.branch) throw new Error(`node ${parentId} is a leaf`);
  parent.branch.children.push(id);
  out.nodes.push({
    id,
    question,
    evaluator: { kind: "llm" },
    context: "",
    answer_language: "de",
  });
  return out;
}

export function addBranch(
  doc: RulemapDoc,
  parentId: string,
  id: string,
  op: "all" | "any" | "one",
  firstChild: { id: string; question: string },
): RulemapDoc {
  // branches must not be empty, so a branch is always created with one leaf
  const out = cloneDoc(doc);
  for (const used of [id, firstChild.id]) {
    if (out.nodes.some((n) => n.id === used)) throw new Error(`id ${used} already used`);
  }
  const parent = findNode(out, parentId);
  if (!parent.branch) throw new Error(`node ${parentId} is a leaf`);
  parent.branch.children.push(id);
  out.nodes.push({ id, label: "", branch: { op, negated: false, children: [firstChild.id] } });
  out.nodes.push({
    id: firstChild.id,
    question: firstChild.question,
    evaluator: { kind: "llm" },
    context: "",
    answer_language: "de",
  });
  return out;
}

export function deleteSubtree(doc: RulemapDoc, nodeId: string): RulemapDoc {
  if (nodeId === doc.root) throw new Error("cannot delete the root");
  const out = cloneDoc(doc);
  const doomed = new Set<string>();
  const collect = (id: string) => {
    doomed.add(id);
    const node = findNode(out, id);
    for (const child of node.branch?.children ?? []) collect(child);
  };
  collect(nodeId);
  const parent = out.nodes.find((n) => n.branch?.children.includes(nodeId));
  if (parent?.branch) {
    parent.branch.children = parent.branch.children.filter((c) => c !== nodeId);
  }
  out.nodes = out.nodes.filter((n) => !doomed.has(n.id));
  return out;
}

export function setOperator(
  doc: RulemapDoc,
  nodeId: string,
  op: "all" | "any" | "one",
  negated: boolean,
): RulemapDoc {
  const out = cloneDoc(doc);
  const node = findNode(out, nodeId);
  if (!node.branch) throw new Error(`node ${nodeId} is a leaf`);
  node.branch.op = op;
  node.branch.negated = negated;
  return out;
}
