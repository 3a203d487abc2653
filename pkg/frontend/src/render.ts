/** Pure HTML renderers over the view model.
 *
 * Numbers are rendered with String(...) on the raw service values, so what
 * the user sees is exactly what the API returned.
 */

import type { TreeNode, TreePayload } from "./api.js";
import type { ChatViewModel } from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function renderMessages(vm: ChatViewModel): string {
  const rows = vm.messages.map((m) => {
    const extra = m.role === "error" && vm.failedUtterance !== null
      ? ' <button class="retry" data-action="retry">retry</button>'
      : "";
    return `<div class="msg msg-${m.role}"><span class="who">${m.role}</span>` +
      `<span class="text">${escapeHtml(m.text)}</span>${extra}</div>`;
  });
  if (vm.terminated) {
    rows.push('<div class="msg msg-terminated">The session has ended.</div>');
  }
  return rows.join("\n");
}

export function renderStance(vm: ChatViewModel): string {
  if (vm.stance === null) {
    return '<span class="stance-value">–</span>';
  }
  const width = Math.round(vm.stance * 100); // presentation only: gauge geometry
  return (
    `<span class="stance-value">${String(vm.stance)}</span>` +
    `<div class="gauge"><div class="gauge-fill" style="width:${width}%"></div></div>`
  );
}

export function renderSiblings(vm: ChatViewModel): string {
  if (vm.terminated) {
    return '<p class="hint">Session over.</p>';
  }
  if (vm.siblings.length === 0) {
    return '<p class="hint">No arguments to refer to right now.</p>';
  }
  const rows = vm.siblings.map((s) => {
    const actions = (["why", "prefer", "reject"] as const)
      .map(
        (kind) =>
          `<button class="prefill" data-action="prefill" data-kind="${kind}" data-id="${s.id}">${kind}</button>`,
      )
      .join(" ");
    return (
      `<li class="sibling sibling-${s.relation}" data-id="${s.id}">` +
      `<span class="rel">${s.relation}</span> ${escapeHtml(s.text)} ${actions}</li>`
    );
  });
  return `<ul class="siblings">${rows.join("\n")}</ul>`;
}

function nodeLabel(node: TreeNode, tree: TreePayload): string {
  const classes = ["node"];
  if (node.id === tree.current) classes.push("current");
  if (node.rejected) classes.push("rejected");
  const clickable = !node.rejected && tree.displayed.includes(node.id);
  if (clickable) classes.push("clickable");
  const strength = node.strength === null ? "–" : String(node.strength);
  const click = clickable ? ` data-action="prefill" data-kind="why" data-id="${node.id}"` : "";
  return (
    `<span class="${classes.join(" ")}"${click}>` +
    `[${node.relation}] ${escapeHtml(node.text)} ` +
    `<span class="strength">strength ${strength}</span></span>`
  );
}

export function renderTree(tree: TreePayload | null): string {
  if (!tree) {
    return '<p class="hint">Tree not loaded yet.</p>';
  }
  const byId = new Map(tree.nodes.map((n) => [n.id, n]));

  function renderNode(id: string): string {
    const node = byId.get(id);
    if (!node) return "";
    const children = node.children.map(renderNode).join("");
    const list = children ? `<ul>${children}</ul>` : "";
    return `<li>${nodeLabel(node, tree!)}${list}</li>`;
  }

  return `<ul class="tree">${renderNode(tree.root)}</ul>`;
}

export function renderDebug(vm: ChatViewModel): string {
  if (!vm.debug) {
    return '<p class="hint">No model output yet.</p>';
  }
  const dist = Object.entries(vm.debug.distribution)
    .map(([label, p]) => `<tr><td>${escapeHtml(label)}</td><td>${String(p)}</td></tr>`)
    .join("");
  const sims = vm.debug.similarity_scores.map((s) => String(s)).join(", ");
  return (
    `<table class="dist">${dist}</table>` +
    `<p class="sims">similarity: [${sims}]</p>`
  );
}
