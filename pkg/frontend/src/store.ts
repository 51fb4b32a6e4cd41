// Session view-model. All state transitions are driven by server
// responses; the DOM layer just renders the current view. One in-flight
// message per session is enforced here.

import { ApiClient, ApiError } from "./api.js";
import type { ChatBubble, ProblemSummary, UiSessionView } from "./types.js";

type Listener = (view: UiSessionView) => void;

function emptyView(): UiSessionView {
  return {
    sessionId: null,
    problem: null,
    messages: [],
    status: null,
    pending: false,
    error: null,
  };
}

export class TutorSession {
  view: UiSessionView = emptyView();
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.view);
  }

  private patch(changes: Partial<UiSessionView>): void {
    this.view = { ...this.view, ...changes };
    this.emit();
  }

  /** Input is enabled exactly while the server says the session is active. */
  get inputEnabled(): boolean {
    return this.view.status === "active";
  }

  /** Sending additionally requires no in-flight round-trip. */
  get canSend(): boolean {
    return this.inputEnabled && !this.view.pending;
  }

  async start(problem: ProblemSummary): Promise<void> {
    this.view = emptyView();
    this.patch({ problem, pending: true });
    try {
      const created = await this.api.createSession(problem.id);
      this.patch({
        sessionId: created.session_id,
        messages: [
          { role: "teacher", text: created.teacher_message, phase: created.phase },
        ],
        status: "active",
        pending: false,
        error: null,
      });
    } catch (err) {
      // no phantom session: the view keeps zero bubbles and no session id
      this.patch({
        sessionId: null,
        messages: [],
        status: null,
        pending: false,
        error: `Could not start the session. ${describe(err)}`,
      });
    }
  }

  /** Restore a running session after a reload. */
  async restore(sessionId: string, problem: ProblemSummary | null = null): Promise<void> {
    this.view = emptyView();
    this.patch({ problem, pending: true });
    try {
      const transcript = await this.api.getSession(sessionId);
      this.patch({
        sessionId,
        messages: transcript.utterances.map(
          (u): ChatBubble => ({ role: u.role, text: u.text, phase: u.phase }),
        ),
        status: transcript.status,
        pending: false,
        error: null,
      });
    } catch (err) {
      this.patch({ pending: false, error: `Could not restore the session. ${describe(err)}` });
    }
  }

  async send(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || !this.canSend || this.view.sessionId === null) {
      return; // blocked client-side: empty input, inactive session, or in flight
    }
    const optimistic: ChatBubble = { role: "student", text: trimmed, pending: true };
    this.patch({
      messages: [...this.view.messages, optimistic],
      pending: true,
      error: null,
    });
    try {
      const reply = await this.api.postMessage(this.view.sessionId, trimmed);
      const settled = this.view.messages.map((m) =>
        m === optimistic ? { role: m.role, text: m.text } : m,
      );
      this.patch({
        messages: [
          ...settled,
          { role: "teacher", text: reply.teacher_message, phase: reply.phase },
        ],
        status: reply.status,
        pending: false,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // session already completed server-side: drop the unaccepted bubble
        // and reconcile with the authoritative transcript
        this.patch({
          messages: this.view.messages.filter((m) => m !== optimistic),
          status: "completed",
          pending: false,
        });
        await this.reconcile();
        return;
      }
      const failed = this.view.messages.map((m) =>
        m === optimistic ? { ...m, pending: false, failed: true } : m,
      );
      this.patch({
        messages: failed,
        pending: false,
        error: `Message not delivered. ${describe(err)}`,
      });
    }
  }

  /** Re-send the most recent failed bubble. */
  async retry(): Promise<void> {
    const failed = [...this.view.messages].reverse().find((m) => m.failed);
    if (!failed) return;
    this.patch({
      messages: this.view.messages.filter((m) => m !== failed),
      error: null,
    });
    await this.send(failed.text);
  }

  /** Pull the server transcript into the view. */
  async reconcile(): Promise<void> {
    if (this.view.sessionId === null) return;
    try {
      const transcript = await this.api.getSession(this.view.sessionId);
      this.patch({
        messages: transcript.utterances.map(
          (u): ChatBubble => ({ role: u.role, text: u.text, phase: u.phase }),
        ),
        status: transcript.status,
      });
    } catch {
      // keep the local view; the next round-trip will reconcile
    }
  }

  /** Current phase badge: the phase of the latest teacher bubble. */
  get currentPhase(): string | null {
    for (let i = this.view.messages.length - 1; i >= 0; i--) {
      const phase = this.view.messages[i].phase;
      if (phase) return phase;
    }
    return null;
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? "The service is unreachable." : err.message;
  }
  return String(err);
}
