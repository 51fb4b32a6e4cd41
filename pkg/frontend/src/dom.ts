// DOM rendering: pure functions from the view model to elements.

import { renderMarkdown, stripPhaseTag } from "./markdown.js";
import { TutorSession } from "./store.js";
import type { ChatBubble, ProblemSummary, UiSessionView } from "./types.js";

const PHASE_LABEL: Record<string, string> = {
  review: "Review",
  guidance: "Guidance",
  rectification: "Rectification",
  summarization: "Summary",
};

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function phaseBadge(phase: string): HTMLElement {
  const badge = el("span", `badge badge-${phase}`, PHASE_LABEL[phase] ?? phase);
  badge.dataset.phase = phase;
  return badge;
}

function bubble(message: ChatBubble, onRetry: () => void): HTMLElement {
  const wrap = el("div", `bubble-row ${message.role}`);
  const body = el("div", `bubble ${message.role}`);
  if (message.pending) body.classList.add("pending");
  if (message.failed) body.classList.add("failed");
  const content = el("div", "bubble-text");
  content.innerHTML = renderMarkdown(
    message.role === "teacher" ? stripPhaseTag(message.text) : message.text,
  );
  body.appendChild(content);
  if (message.phase) body.prepend(phaseBadge(message.phase));
  if (message.failed) {
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", onRetry);
    body.appendChild(retry);
  }
  wrap.appendChild(body);
  return wrap;
}

export interface ChatElements {
  messages: HTMLElement;
  input: HTMLInputElement | HTMLTextAreaElement;
  sendButton: HTMLButtonElement;
  banner: HTMLElement;
  statusBadge: HTMLElement;
  problemTitle: HTMLElement;
}

export function renderChat(
  session: TutorSession,
  view: UiSessionView,
  elements: ChatElements,
): void {
  elements.problemTitle.textContent = view.problem
    ? view.problem.question_text
    : "Pick a problem to begin";

  elements.messages.replaceChildren(
    ...view.messages.map((m) => bubble(m, () => void session.retry())),
  );
  elements.messages.scrollTop = elements.messages.scrollHeight;

  elements.statusBadge.replaceChildren();
  const phase = session.currentPhase;
  if (phase) elements.statusBadge.appendChild(phaseBadge(phase));
  if (view.status === "completed") {
    elements.statusBadge.appendChild(el("span", "badge badge-done", "Session complete"));
  }

  elements.banner.textContent = view.error ?? "";
  elements.banner.hidden = view.error === null;

  elements.input.disabled = !session.inputEnabled;
  elements.sendButton.disabled = !session.canSend;
  if (view.status === "completed") {
    elements.input.placeholder = "The tutor has summarized this problem.";
  } else {
    elements.input.placeholder = "Type your answer or question…";
  }
}

export function renderProblemList(
  problems: ProblemSummary[],
  container: HTMLElement,
  onPick: (problem: ProblemSummary) => void,
): void {
  container.replaceChildren(
    ...problems.map((problem) => {
      const item = el("button", "problem");
      item.appendChild(el("div", "problem-title", problem.question_text));
      const meta = el("div", "problem-meta");
      meta.appendChild(el("span", "difficulty", "★".repeat(problem.difficulty)));
      for (const kg of problem.knowledge_points) {
        meta.appendChild(el("span", "kg", kg));
      }
      item.appendChild(meta);
      item.addEventListener("click", () => onPick(problem));
      return item;
    }),
  );
}
