/** DOM wiring: one session per page, one in-flight request at a time. */

import { ApiClient } from "./api.js";
import {
  applyCreated,
  applyFailure,
  applyTree,
  applyUtterance,
  appendUser,
  emptyViewModel,
  prefillFor,
  type ChatViewModel,
} from "./model.js";
import { renderDebug, renderMessages, renderSiblings, renderStance, renderTree } from "./render.js";

const api = new ApiClient("");
let vm: ChatViewModel = emptyViewModel();

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

const messagesEl = el<HTMLDivElement>("messages");
const stanceEl = el<HTMLDivElement>("stance");
const siblingsEl = el<HTMLDivElement>("siblings");
const treeEl = el<HTMLDivElement>("tree");
const debugEl = el<HTMLDivElement>("debug");
const debugToggle = el<HTMLInputElement>("debug-toggle");
const topicEl = el<HTMLSpanElement>("topic");
const input = el<HTMLInputElement>("utterance");
const sendBtn = el<HTMLButtonElement>("send");

function render(): void {
  topicEl.textContent = vm.topic;
  messagesEl.innerHTML = renderMessages(vm);
  stanceEl.innerHTML = renderStance(vm);
  siblingsEl.innerHTML = renderSiblings(vm);
  treeEl.innerHTML = renderTree(vm.tree);
  debugEl.innerHTML = renderDebug(vm);
  debugEl.hidden = !debugToggle.checked;
  const locked = vm.pending || vm.terminated || vm.sessionId === null;
  input.disabled = locked;
  sendBtn.disabled = locked;
  messagesEl.scrollTop = messagesEl.scrollHeight;
}

async function refreshTree(): Promise<void> {
  if (vm.sessionId === null) return;
  try {
    vm = applyTree(vm, await api.getTree(vm.sessionId));
  } catch {
    // tree view is auxiliary; keep the last good one
  }
}

async function send(text: string): Promise<void> {
  const sessionId = vm.sessionId;
  if (sessionId === null || vm.pending || vm.terminated) return;
  const trimmed = text.trim();
  if (!trimmed) return;
  vm = appendUser(vm, trimmed);
  input.value = "";
  render();
  try {
    const res = await api.sendUtterance(sessionId, trimmed);
    vm = applyUtterance(vm, res);
    await refreshTree();
  } catch (err) {
    vm = applyFailure(vm, trimmed, err instanceof Error ? err.message : String(err));
  }
  render();
}

async function start(): Promise<void> {
  try {
    const created = await api.createSession();
    vm = applyCreated(vm, created);
    await refreshTree();
  } catch (err) {
    vm = applyFailure(vm, null, err instanceof Error ? err.message : String(err));
  }
  render();
}

sendBtn.addEventListener("click", () => void send(input.value));
input.addEventListener("keydown", (e) => {
  if (e.key === "Enter") void send(input.value);
});
debugToggle.addEventListener("change", render);

document.body.addEventListener("click", (e) => {
  const target = (e.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action;
  if (action === "retry" && vm.failedUtterance) {
    void send(vm.failedUtterance);
    return;
  }
  if (action === "prefill") {
    const id = target.dataset.id;
    const kind = target.dataset.kind as "why" | "prefer" | "reject";
    const sibling = vm.siblings.find((s) => s.id === id);
    const fromTree = vm.tree?.nodes.find((n) => n.id === id);
    const text = sibling?.text ?? fromTree?.text;
    if (text && !input.disabled) {
      input.value = prefillFor(kind, text);
      input.focus();
    }
  }
});

void start();
