import { describe, expect, it, vi } from "vitest";

import { ApiClient, type TreePayload, type UtteranceResponse } from "../src/api.js";
import {
  applyCreated,
  applyFailure,
  applyTree,
  applyUtterance,
  appendUser,
  emptyViewModel,
  prefillFor,
} from "../src/model.js";
import { renderDebug, renderMessages, renderSiblings, renderStance, renderTree } from "../src/render.js";

// sentinel numbers chosen so any recomputation would be visible
const STANCE = 0.637429815;
const STRENGTH = 0.123456789012;
const SIMILARITY = 0.987650112;
const PROB = 0.4242424242;

const STATE = {
  session_id: "s1",
  topic: "marriage",
  current_id: "claim",
  current_text: "root claim",
  displayed: [
    { id: "c1", text: "first argument", relation: "support" as const },
    { id: "c3", text: "third argument", relation: "attack" as const },
  ],
  stance: STANCE,
  rejected: [],
  preferences: {},
  terminated: false,
};

const UTTERANCE_REPLY: UtteranceResponse = {
  response_text: "interesting point",
  intent: "why",
  confidence: PROB,
  resolved_argument: "c1",
  stance: STANCE,
  clarification: false,
  state: STATE,
  debug: {
    distribution: { why: PROB, stance: 1 - PROB },
    similarity_scores: [SIMILARITY, 0.25],
  },
};

const TREE: TreePayload = {
  root: "claim",
  current: "claim",
  displayed: ["c1", "c3"],
  nodes: [
    {
      id: "claim", text: "root claim", relation: "root", parent: null, weight: 0.5,
      children: ["c1", "c3"], rejected: false, strength: STRENGTH, preferences: 0,
    },
    {
      id: "c1", text: "first argument", relation: "support", parent: "claim", weight: 0.6,
      children: [], rejected: false, strength: 0.6, preferences: 0,
    },
    {
      id: "c3", text: "third argument", relation: "attack", parent: "claim", weight: 0.4,
      children: [], rejected: true, strength: null, preferences: 0,
    },
  ],
};

function seededViewModel() {
  let vm = emptyViewModel();
  vm = applyCreated(vm, { session_id: "s1", response_text: "welcome", state: STATE });
  return vm;
}

describe("view model", () => {
  it("keeps message history append-only across updates", () => {
    let vm = seededViewModel();
    vm = appendUser(vm, "why?");
    const before = [...vm.messages];
    vm = applyUtterance(vm, UTTERANCE_REPLY);
    expect(vm.messages.slice(0, before.length)).toEqual(before);
    expect(vm.messages.at(-1)).toEqual({ role: "system", text: "interesting point" });
  });

  it("mirrors the last response verbatim", () => {
    let vm = seededViewModel();
    vm = applyUtterance(vm, UTTERANCE_REPLY);
    expect(vm.stance).toBe(STANCE);
    expect(vm.siblings).toEqual(STATE.displayed);
    expect(vm.debug?.similarity_scores[0]).toBe(SIMILARITY);
  });

  it("on failure adds an error row and leaves dialogue state untouched", () => {
    let vm = seededViewModel();
    const snapshotStance = vm.stance;
    const snapshotSiblings = vm.siblings;
    vm = appendUser(vm, "why?");
    vm = applyFailure(vm, "why?", "malformed server reply: missing fields");
    expect(vm.stance).toBe(snapshotStance);
    expect(vm.siblings).toBe(snapshotSiblings);
    expect(vm.terminated).toBe(false);
    expect(vm.pending).toBe(false);
    expect(vm.failedUtterance).toBe("why?");
    expect(vm.messages.at(-1)?.role).toBe("error");
    expect(renderMessages(vm)).toContain("retry");
  });

  it("prefills move drafts for the user to edit", () => {
    expect(prefillFor("why", "X")).toBe("Tell me more about the argument that X");
    expect(prefillFor("prefer", "X")).toContain("I prefer");
    expect(prefillFor("reject", "X")).toContain("I reject");
  });
});

describe("zero client-side numeric computation (mock service)", () => {
  it("renders the stance exactly as the service sent it", async () => {
    const fetchFn = vi.fn(async () =>
      new Response(JSON.stringify(UTTERANCE_REPLY), { status: 200 }),
    );
    const client = new ApiClient("", fetchFn as unknown as typeof fetch);
    const reply = await client.sendUtterance("s1", "what is my stance");
    let vm = seededViewModel();
    vm = applyUtterance(vm, reply);
    const html = renderStance(vm);
    expect(html).toContain(`>${String(STANCE)}<`); // verbatim, no rounding or math
  });

  it("renders strengths and debug scores verbatim", () => {
    let vm = seededViewModel();
    vm = applyUtterance(vm, UTTERANCE_REPLY);
    vm = applyTree(vm, TREE);
    expect(renderTree(vm.tree)).toContain(`strength ${String(STRENGTH)}`);
    const debugHtml = renderDebug(vm);
    expect(debugHtml).toContain(String(SIMILARITY));
    expect(debugHtml).toContain(String(PROB));
  });
});

describe("rendering states", () => {
  it("marks rejected nodes struck and unclickable", () => {
    const html = renderTree(TREE);
    expect(html).toMatch(/class="node rejected"[^>]*>\[attack\] third argument/);
    expect(html).not.toMatch(/rejected[^"]*clickable/);
    expect(html).toMatch(/class="node current[^"]*".*root claim/);
  });

  it("renders empty sibling list as a disabled hint", () => {
    let vm = seededViewModel();
    vm = { ...vm, siblings: [] };
    expect(renderSiblings(vm)).toContain("No arguments");
    expect(renderSiblings(vm)).not.toContain("data-action");
  });

  it("renders the terminated notice and no actions after exit", () => {
    let vm = seededViewModel();
    vm = applyUtterance(vm, {
      ...UTTERANCE_REPLY,
      response_text: "Goodbye!",
      intent: "exit",
      state: { ...STATE, terminated: true },
    });
    expect(vm.terminated).toBe(true);
    expect(renderMessages(vm)).toContain("The session has ended.");
    expect(renderSiblings(vm)).toContain("Session over.");
  });

  it("escapes markup in message text", () => {
    let vm = seededViewModel();
    vm = appendUser(vm, "<script>alert(1)</script>");
    expect(renderMessages(vm)).not.toContain("<script>");
    expect(renderMessages(vm)).toContain("&lt;script&gt;");
  });
});
