// Wire types mirror the service JSON exactly; nothing here carries a
// system identity, so the client cannot leak one even by accident.

export type Score = 1 | 2 | 3 | 4 | 5;

export interface TaskPayload {
  task_id: string;
  direction: string;
  source_text: string;
  hypothesis_text: string;
  status: "pending" | "rated";
}

export interface SessionPayload {
  annotator_id: string;
  tasks: TaskPayload[];
}

export interface RatingAck {
  task_id: string;
  score: number;
  status: string;
  submitted_at: string;
}

export type ApiFailureKind = "unauthorized" | "missing" | "rejected" | "network";

export class ApiError extends Error {
  constructor(public kind: ApiFailureKind, message: string) {
    super(message);
  }
}

export interface ApiClient {
  loadSession(annotatorId: string): Promise<SessionPayload>;
  submitRating(taskId: string, score: Score): Promise<RatingAck>;
}
