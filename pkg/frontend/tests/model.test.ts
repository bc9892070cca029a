import { describe, expect, it } from "vitest";

import type { RulemapDoc, Trace, TraceEntry } from "../src/api.js";
import {
  applyTrace,
  buildViewModel,
  clearTruth,
  operatorGlyph,
  renderedStates,
  rootBadge,
  StaleTraceError,
} from "../src/model.js";

function smallDoc(): RulemapDoc {
  return {
    id: "demo",
    version: 1,
    title: "Demo",
    root: "root",
    nodes: [
      { id: "root", label: "Wurzel", branch: { op: "all", negated: false, children: ["a", "b"] } },
      { id: "a", question: "Frage A?", evaluator: { kind: "llm" }, context: "", answer_language: "de" },
      { id: "b", label: "", branch: { op: "any", negated: true, children: ["c"] } },
      { id: "c", question: "Frage C?", evaluator: { kind: "llm" }, context: "K", answer_language: "de" },
    ],
    metadata: {},
  };
}

function entry(node_id: string, value: boolean | null, flags: string[] = []): TraceEntry {
  return { node_id, value, raw_answer: value === null ? "" : "ja", attempts: 1, evidence: "", flags };
}

function traceFor(doc: RulemapDoc, entries: TraceEntry[], root: boolean): Trace {
  return {
    rulemap_id: doc.id,
    rulemap_version: doc.version,
    case_id: "t",
    mode: "full",
    root_value: root,
    order: entries.map((e) => e.node_id),
    entries,
  };
}

describe("buildViewModel", () => {
  it("renders every node exactly once and mirrors the structure", () => {
    const view = buildViewModel(smallDoc());
    expect(view.nodes.size).toBe(4);
    expect(view.root.id).toBe("root");
    expect(view.root.children.map((c) => c.id)).toEqual(["a", "b"]);
    expect(view.nodes.get("b")!.children.map((c) => c.id)).toEqual(["c"]);
  });

  it("shows operator glyphs with negation marker", () => {
    const view = buildViewModel(smallDoc());
    expect(view.root.glyph).toBe("∧");
    expect(view.nodes.get("b")!.glyph).toBe("¬∨");
    expect(operatorGlyph("one", false)).toBe("⊻");
  });

  it("only leaves offer the override affordance", () => {
    const view = buildViewModel(smallDoc());
    expect(view.nodes.get("a")!.overridable).toBe(true);
    expect(view.nodes.get("b")!.overridable).toBe(false);
  });

  it("rejects documents that are not a one-to-one tree", () => {
    const dup = smallDoc();
    dup.nodes.push({ ...dup.nodes[1]! });
    expect(() => buildViewModel(dup)).toThrow(/duplicate/);

    const missing = smallDoc();
    missing.nodes = missing.nodes.filter((n) => n.id !== "c");
    expect(() => buildViewModel(missing)).toThrow(/not defined/);

    const unreachable = smallDoc();
    unreachable.nodes.push({
      id: "stray",
      question: "?",
      evaluator: { kind: "llm" },
      context: "",
      answer_language: "de",
    });
    expect(() => buildViewModel(unreachable)).toThrow(/not reachable/);
  });
});

describe("applyTrace", () => {
  it("copies served values verbatim, never recomputing them", () => {
    const doc = smallDoc();
    const view = buildViewModel(doc);
    // deliberately inconsistent: root true although child a is false; the
    // UI must show exactly what was served
    const trace = traceFor(
      doc,
      [entry("a", false), entry("c", true), entry("b", false), entry("root", true)],
      true,
    );
    applyTrace(view, trace);
    expect(renderedStates(view)).toEqual({
      root: "true",
      a: "false",
      b: "false",
      c: "true",
    });
    expect(rootBadge(view)).toBe("satisfied");
  });

  it("marks skipped and failed states distinctly", () => {
    const doc = smallDoc();
    const view = buildViewModel(doc);
    const trace = traceFor(
      doc,
      [
        entry("a", false),
        entry("c", null),
        entry("b", null),
        { ...entry("root", false), flags: [] },
      ],
      false,
    );
    trace.entries[0] = { ...trace.entries[0]!, flags: ["leaf_failure_defaulted"] };
    applyTrace(view, trace);
    const states = renderedStates(view);
    expect(states.a).toBe("failed");
    expect(states.c).toBe("skipped");
    expect(states.root).toBe("false");
  });

  it("rejects stale traces without partial rendering", () => {
    const doc = smallDoc();
    const view = buildViewModel(doc);
    const stale = traceFor(doc, [entry("a", true)], true);
    stale.rulemap_version = 99;
    expect(() => applyTrace(view, stale)).toThrow(StaleTraceError);
    expect(renderedStates(view)).toEqual({
      root: "pending",
      a: "pending",
      b: "pending",
      c: "pending",
    });
  });

  it("clearTruth resets to pending", () => {
    const doc = smallDoc();
    const view = buildViewModel(doc);
    applyTrace(
      view,
      traceFor(doc, [entry("a", true), entry("c", true), entry("b", false), entry("root", false)], false),
    );
    clearTruth(view);
    expect(rootBadge(view)).toBe("pending");
    expect(new Set(Object.values(renderedStates(view)))).toEqual(new Set(["pending"]));
  });

  it("keeps an evidence excerpt from the raw answer", () => {
    const doc = smallDoc();
    const view = buildViewModel(doc);
    const long = "Ja. ".repeat(100);
    const trace = traceFor(
      doc,
      [
        { node_id: "a", value: true, raw_answer: long, attempts: 2, evidence: "", flags: [] },
        entry("c", true),
        entry("b", false),
        entry("root", false),
      ],
      false,
    );
    applyTrace(view, trace);
    const shown = view.nodes.get("a")!.evidence;
    expect(shown.length).toBeLessThanOrEqual(120);
    expect(shown.endsWith("…")).toBe(true);
  });
});

describe("no local boolean logic", () => {
  it("model source never derives a node truth from other nodes", async () => {
    const fs = await import("node:fs/promises");
    const source = await fs.readFile(new URL("../src/model.ts", import.meta.url), "utf-8");
    // the only assignments to .truth must be literal states or the served value
    const assignments = source.match(/\.truth\s*=\s*[^;]+;/g) ?? [];
    expect(assignments.length).toBeGreaterThan(0);
    for (const statement of assignments) {
      expect(statement).not.toMatch(/&&|\|\||children|every|some/);
    }
  });
});
