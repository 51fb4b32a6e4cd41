// Entry point: wire the problem list and the chat surface together.
// The session id rides in the URL hash so a reload restores the transcript.

import { ApiClient } from "./api.js";
import { ChatElements, renderChat, renderProblemList } from "./dom.js";
import { TutorSession } from "./store.js";

const api = new ApiClient(
  (window as unknown as { SOCTUTOR_API?: string }).SOCTUTOR_API ?? "",
);
const session = new TutorSession(api);

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const elements: ChatElements = {
  messages: byId("messages"),
  input: byId<HTMLInputElement>("chat-input"),
  sendButton: byId<HTMLButtonElement>("send"),
  banner: byId("banner"),
  statusBadge: byId("status"),
  problemTitle: byId("problem-title"),
};

session.subscribe((view) => renderChat(session, view, elements));

async function submit(): Promise<void> {
  const text = elements.input.value;
  if (!text.trim()) return; // blocked client-side
  elements.input.value = "";
  await session.send(text);
}

elements.sendButton.addEventListener("click", () => void submit());
elements.input.addEventListener("keydown", (event) => {
  if ((event as KeyboardEvent).key === "Enter") void submit();
});

async function boot(): Promise<void> {
  const list = byId("problems");
  try {
    const page = await api.listProblems();
    renderProblemList(page.items, list, (problem) => {
      void session.start(problem).then(() => {
        if (session.view.sessionId) {
          window.location.hash = session.view.sessionId;
        }
      });
    });
  } catch {
    byId("banner").textContent = "Could not load problems; is the service running?";
    byId("banner").hidden = false;
  }

  const sid = window.location.hash.slice(1);
  if (sid) await session.restore(sid);
}

void boot();
