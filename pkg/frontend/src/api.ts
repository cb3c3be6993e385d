// Thin client for the four study endpoints. Configuration is limited to the
// API base URL; everything else comes from the server.

import type { AnnotationBody, NextTask, StudyInfo } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async getStudy(): Promise<StudyInfo> {
    const response = await fetch(this.url("/api/study"));
    if (!response.ok) {
      throw new ApiError(`study request failed (${response.status})`, response.status);
    }
    return (await response.json()) as StudyInfo;
  }

  async nextTask(annotatorId: string): Promise<NextTask> {
    const query = new URLSearchParams({ annotator: annotatorId });
    const response = await fetch(this.url(`/api/tasks/next?${query}`));
    if (!response.ok) {
      throw new ApiError(`next-task request failed (${response.status})`, response.status);
    }
    return (await response.json()) as NextTask;
  }

  /** Submit one annotation. Resolves with the HTTP status so the caller can
   *  distinguish accepted (201) from already-annotated conflicts (409). */
  async submitAnnotation(body: AnnotationBody): Promise<number> {
    const response = await fetch(this.url("/api/annotations"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (response.status === 201 || response.status === 409) {
      return response.status;
    }
    throw new ApiError(`annotation rejected (${response.status})`, response.status);
  }
}
