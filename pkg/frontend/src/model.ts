/** Chat view model and its pure update functions.
 *
 * The model mirrors the last service response verbatim: stance, strengths
 * and similarity scores are stored exactly as received and never recomputed
 * client-side. Message history is append-only.
 */

import type {
  CreateSessionResponse,
  DebugPayload,
  Sibling,
  TreePayload,
  UtteranceResponse,
} from "./api.js";

export type Role = "user" | "system" | "error";

export interface Message {
  role: Role;
  text: string;
}

export interface ChatViewModel {
  sessionId: string | null;
  topic: string;
  messages: Message[];
  siblings: Sibling[];
  /** Raw stance from the last service response; null before the first one. */
  stance: number | null;
  terminated: boolean;
  debug: DebugPayload | null;
  tree: TreePayload | null;
  pending: boolean;
  /** Last utterance that failed, offered for retry. */
  failedUtterance: string | null;
}

export function emptyViewModel(): ChatViewModel {
  return {
    sessionId: null,
    topic: "",
    messages: [],
    siblings: [],
    stance: null,
    terminated: false,
    debug: null,
    tree: null,
    pending: false,
    failedUtterance: null,
  };
}

function withMessages(vm: ChatViewModel, extra: Message[]): ChatViewModel {
  return { ...vm, messages: [...vm.messages, ...extra] };
}

export function applyCreated(vm: ChatViewModel, res: CreateSessionResponse): ChatViewModel {
  return {
    ...withMessages(vm, [{ role: "system", text: res.response_text }]),
    sessionId: res.session_id,
    topic: res.state.topic,
    siblings: res.state.displayed,
    stance: res.state.stance,
    terminated: res.state.terminated,
    failedUtterance: null,
  };
}

export function appendUser(vm: ChatViewModel, text: string): ChatViewModel {
  return { ...withMessages(vm, [{ role: "user", text }]), pending: true };
}

export function applyUtterance(vm: ChatViewModel, res: UtteranceResponse): ChatViewModel {
  return {
    ...withMessages(vm, [{ role: "system", text: res.response_text }]),
    siblings: res.state.displayed,
    stance: res.state.stance,
    terminated: res.state.terminated,
    debug: res.debug,
    pending: false,
    failedUtterance: null,
  };
}

/** Service or network failure: add an inline error row, keep dialogue state. */
export function applyFailure(vm: ChatViewModel, utterance: string | null, message: string): ChatViewModel {
  return {
    ...withMessages(vm, [{ role: "error", text: message }]),
    pending: false,
    failedUtterance: utterance,
  };
}

export function applyTree(vm: ChatViewModel, tree: TreePayload): ChatViewModel {
  return { ...vm, tree };
}

/** Click-to-prefill: the human stays the author of every move; clicking a
 * sibling only drafts an utterance for them to edit and send. */
export function prefillFor(kind: "why" | "prefer" | "reject", argumentText: string): string {
  switch (kind) {
    case "why":
      return `Tell me more about the argument that ${argumentText}`;
    case "prefer":
      return `I prefer the argument that ${argumentText}`;
    case "reject":
      return `I reject the argument that ${argumentText}`;
  }
}
