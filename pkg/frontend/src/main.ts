// Application entry point: wires the API client, view model, case-run panel,
// and DOM rendering together.

import { RulemapApi } from "./api.js";
import { buildViewModel, StaleTraceError, type TreeViewModel } from "./model.js";
import {
  clearOverride,
  editContextAndRerun,
  newCaseRunPanel,
  runCase,
  setOverride,
} from "./state.js";
import { renderTree, showStaleBanner } from "./view.js";

const params = new URLSearchParams(window.location.search);
const api = new RulemapApi(params.get("service") ?? "http://127.0.0.1:8099");
const panel = newCaseRunPanel();

const treeHost = document.getElementById("tree")!;
const picker = document.getElementById("picker") as HTMLSelectElement;
const caseText = document.getElementById("case-text") as HTMLTextAreaElement;
const runButton = document.getElementById("run") as HTMLButtonElement;
const modeSelect = document.getElementById("mode") as HTMLSelectElement;
const status = document.getElementById("status")!;

let view: TreeViewModel | undefined;

function redraw(): void {
  if (!view) return;
  renderTree(treeHost, view, {
    onOverride(leafId, value) {
      if (!view) return;
      if (value === undefined) clearOverride(panel, leafId);
      else setOverride(panel, view, leafId, value);
      void evaluate();
    },
    onEditContext(leafId, text) {
      void (async () => {
        if (!view) return;
        const result = await editContextAndRerun(api, view, panel, leafId, text);
        view = result.view;
        status.textContent = `Kontext gespeichert (Version ${result.version}).`;
        redraw();
      })();
    },
  });
}

async function evaluate(): Promise<void> {
  if (!view) return;
  panel.caseText = caseText.value;
  panel.mode = modeSelect.value === "short" ? "short" : "full";
  try {
    await runCase(api, view, panel);
    status.textContent = "";
  } catch (error) {
    if (error instanceof StaleTraceError) {
      showStaleBanner(treeHost);
      return;
    }
    status.textContent = String(error);
    return;
  }
  redraw();
}

async function loadSelected(): Promise<void> {
  const doc = await api.getRulemap(picker.value);
  view = buildViewModel(doc);
  panel.overrides.clear();
  panel.lastTrace = undefined;
  redraw();
}

async function boot(): Promise<void> {
  const maps = await api.listRulemaps();
  picker.replaceChildren(
    ...maps.map((m) => new Option(`${m.title} (v${m.version})`, m.id)),
  );
  picker.addEventListener("change", () => void loadSelected());
  runButton.addEventListener("click", () => void evaluate());
  if (maps.length) await loadSelected();
}

void boot();
