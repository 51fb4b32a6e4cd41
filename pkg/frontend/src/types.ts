// Shared types for the tutoring chat client.

export type Phase = "review" | "guidance" | "rectification" | "summarization";
export type SessionStatus = "active" | "completed" | "aborted";
export type Role = "teacher" | "student";

export interface ProblemSummary {
  id: string;
  question_text: string;
  question_type: string;
  knowledge_points: string[];
  difficulty: number;
}

export interface ProblemPage {
  items: ProblemSummary[];
  page: number;
  page_size: number;
  total: number;
}

export interface CreateSessionResponse {
  session_id: string;
  teacher_message: string;
  phase: Phase;
}

export interface PostMessageResponse {
  teacher_message: string;
  phase: Phase;
  status: SessionStatus;
}

export interface TranscriptUtterance {
  role: Role;
  text: string;
  phase?: Phase;
  timestamp: string;
}

export interface Transcript {
  session_id: string;
  problem_id: string;
  status: SessionStatus;
  phase: Phase;
  turn_count: number;
  max_turns: number;
  created_at: string;
  updated_at: string;
  utterances: TranscriptUtterance[];
}

export interface ChatBubble {
  role: Role;
  text: string;
  phase?: Phase;
  // client-side decoration
  pending?: boolean; // optimistic bubble awaiting the round-trip
  failed?: boolean; // send failed; offer retry
}

export interface UiSessionView {
  sessionId: string | null;
  problem: ProblemSummary | null;
  messages: ChatBubble[];
  status: SessionStatus | null;
  pending: boolean; // true only between send and response
  error: string | null; // retryable banner text
}
