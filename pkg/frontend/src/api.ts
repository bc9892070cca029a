// Typed client for the rulemap service HTTP API. The UI talks to the
// backend exclusively through this module; it never reads files or calls
// models itself.

export interface CanonicalBranch {
  op: "all" | "any" | "one";
  negated: boolean;
  children: string[];
}

export interface CanonicalEvaluator {
  kind: "llm" | "symbolic";
  predicate?: string;
  params?: string[];
}

export interface CanonicalNode {
  id: string;
  label?: string;
  branch?: CanonicalBranch;
  question?: string;
  evaluator?: CanonicalEvaluator;
  context?: string;
  answer_language?: string | null;
}

export interface RulemapDoc {
  id: string;
  version: number;
  title: string;
  root: string;
  nodes: CanonicalNode[];
  metadata: Record<string, string>;
}

export interface TraceEntry {
  node_id: string;
  value: boolean | null;
  raw_answer: string;
  attempts: number;
  evidence: string;
  flags: string[];
}

export interface Trace {
  rulemap_id: string;
  rulemap_version: number;
  case_id: string | null;
  mode: string;
  root_value: boolean;
  order: string[];
  entries: TraceEntry[];
}

export interface RulemapSummary {
  id: string;
  version: number;
  title: string;
}

export interface SaveResult {
  id: string;
  version: number;
  warnings: unknown[];
}

export interface EvaluateRequest {
  case_text?: string;
  case_id?: string;
  mode?: "full" | "short";
  overrides?: Record<string, boolean>;
  failure_policy?: "strict" | "lenient";
}

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`service returned ${status}: ${JSON.stringify(detail)}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ApiError(response.status, (body as { detail?: unknown }).detail ?? body);
  }
  return body as T;
}

export class RulemapApi {
  constructor(private baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async listRulemaps(): Promise<RulemapSummary[]> {
    const body = await asJson<{ rulemaps: RulemapSummary[] }>(
      await fetch(`${this.baseUrl}/rulemaps`),
    );
    return body.rulemaps;
  }

  async getRulemap(id: string): Promise<RulemapDoc> {
    return asJson(await fetch(`${this.baseUrl}/rulemaps/${id}`));
  }

  /** Optimistic concurrency: pass the version the edit was based on. */
  async putRulemap(id: string, doc: RulemapDoc, baseVersion?: number): Promise<SaveResult> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (baseVersion !== undefined) headers["If-Match"] = String(baseVersion);
    return asJson(
      await fetch(`${this.baseUrl}/rulemaps/${id}`, {
        method: "PUT",
        headers,
        body: JSON.stringify(doc),
      }),
    );
  }

  async putLeafContext(id: string, nodeId: string, context: string): Promise<SaveResult> {
    return asJson(
      await fetch(`${this.baseUrl}/rulemaps/${id}/nodes/${nodeId}/context`, {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ context }),
      }),
    );
  }

  async evaluate(id: string, request: EvaluateRequest): Promise<Trace> {
    return asJson(
      await fetch(`${this.baseUrl}/rulemaps/${id}/evaluate`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(request),
      }),
    );
  }

  async versions(id: string): Promise<{ version: number; summary: string }[]> {
    const body = await asJson<{ versions: { version: number; summary: string }[] }>(
      await fetch(`${this.baseUrl}/rulemaps/${id}/versions`),
    );
    return body.versions;
  }
}
