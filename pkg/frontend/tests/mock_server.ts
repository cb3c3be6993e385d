// In-memory stand-in for the annotation API, implementing the same contract
// the Python service exposes: blinded task payloads, duplicate rejection,
// sealed results until close, and win rates excluding ties.

import type { AnnotationBody, Label, NotePanel } from "../src/types.js";
import { LEGAL_CHOICES } from "../src/types.js";

export interface MockTaskSpec {
  task_id: string;
  dialogue: string;
  notes: Record<string, string>; // system -> note text (never served raw)
  labels: Record<string, Label>; // system -> blinded label
}

export interface TallyBlock {
  singles: Record<string, number>;
  pair_ties: Record<string, number>;
  all_ties: number;
  annotated: number;
}

function roundHalfUp(value: number): number {
  return Math.floor(value + 0.5);
}

export class MockStudyServer {
  readonly records: AnnotationBody[] = [];
  status: "open" | "closed" = "open";
  failNextRequest = false;
  rejectNextSubmission = false;

  constructor(
    readonly studyId: string,
    readonly instructions: string,
    readonly systems: string[],
    readonly tasks: MockTaskSpec[],
  ) {}

  /** Blinded payload: labels and texts only. */
  private taskPayload(task: MockTaskSpec, done: number): unknown {
    const notes: NotePanel[] = this.systems
      .map((system) => ({ label: task.labels[system], text: task.notes[system] }))
      .sort((a, b) => a.label.localeCompare(b.label));
    return {
      task_id: task.task_id,
      dialogue: task.dialogue,
      notes,
      progress: { done, total: this.tasks.length },
    };
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  tally(): { per_annotator: Record<string, TallyBlock>; overall: TallyBlock } {
    const blank = (): TallyBlock => ({
      singles: Object.fromEntries(this.systems.map((s) => [s, 0])),
      pair_ties: {},
      all_ties: 0,
      annotated: 0,
    });
    const perAnnotator: Record<string, TallyBlock> = {};
    const overall = blank();
    for (const record of this.records) {
      const task = this.tasks.find((t) => t.task_id === record.task_id);
      if (!task) continue;
      const labelToSystem = Object.fromEntries(
        Object.entries(task.labels).map(([system, label]) => [label, system]),
      );
      perAnnotator[record.annotator_id] ??= blank();
      for (const block of [perAnnotator[record.annotator_id], overall]) {
        block.annotated += 1;
        if (record.choice.length === 1) {
          block.singles[labelToSystem[record.choice]] += 1;
        } else if (record.choice.length === 2) {
          const pair = [labelToSystem[record.choice[0]], labelToSystem[record.choice[1]]]
            .sort()
            .join("/");
          block.pair_ties[pair] = (block.pair_ties[pair] ?? 0) + 1;
        } else {
          block.all_ties += 1;
        }
      }
    }
    return { per_annotator: perAnnotator, overall };
  }

  winRate(block: TallyBlock): Record<string, number> | null {
    const total = this.systems.reduce((sum, s) => sum + block.singles[s], 0);
    if (total === 0) return null;
    return Object.fromEntries(
      this.systems.map((s) => [s, roundHalfUp((100 * block.singles[s]) / total)]),
    );
  }

  /** fetch-compatible handler covering the four endpoints. */
  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    if (this.failNextRequest) {
      this.failNextRequest = false;
      throw new TypeError("network failure (injected)");
    }
    const url = typeof input === "string" ? input : input.toString();
    const method = init?.method ?? "GET";

    if (url.startsWith("/api/study")) {
      return this.json(200, {
        study_id: this.studyId,
        instructions_text: this.instructions,
        task_count: this.tasks.length,
      });
    }

    if (url.startsWith("/api/tasks/next")) {
      const annotator = new URL(url, "http://localhost").searchParams.get("annotator") ?? "";
      if (!annotator) return this.json(422, { detail: "annotator id required" });
      if (this.status !== "open") return this.json(403, { detail: "closed" });
      const seen = new Set(
        this.records.filter((r) => r.annotator_id === annotator).map((r) => r.task_id),
      );
      for (const task of this.tasks) {
        if (!seen.has(task.task_id)) {
          return this.json(200, this.taskPayload(task, seen.size));
        }
      }
      return this.json(200, { done: true, total: this.tasks.length });
    }

    if (url.startsWith("/api/annotations") && method === "POST") {
      if (this.rejectNextSubmission) {
        this.rejectNextSubmission = false;
        return this.json(422, { detail: "rejected (injected)" });
      }
      if (this.status !== "open") return this.json(403, { detail: "closed" });
      const body = JSON.parse(String(init?.body)) as AnnotationBody;
      if (!LEGAL_CHOICES.has(body.choice)) {
        return this.json(422, { detail: `invalid choice ${body.choice}` });
      }
      if (!this.tasks.some((t) => t.task_id === body.task_id)) {
        return this.json(404, { detail: "unknown task" });
      }
      const duplicate = this.records.some(
        (r) => r.annotator_id === body.annotator_id && r.task_id === body.task_id,
      );
      if (duplicate) return this.json(409, { detail: "duplicate" });
      this.records.push(body);
      return this.json(201, { status: "accepted" });
    }

    if (url.startsWith("/api/results")) {
      if (this.status === "open") return this.json(403, { detail: "sealed" });
      const tally = this.tally();
      return this.json(200, {
        tally,
        win_rate: {
          per_annotator: Object.fromEntries(
            Object.entries(tally.per_annotator).map(([annotator, block]) => [
              annotator,
              this.winRate(block),
            ]),
          ),
          overall: this.winRate(tally.overall),
        },
      });
    }

    return this.json(404, { detail: `no route for ${method} ${url}` });
  };
}

export function makeStudy(taskCount: number): MockStudyServer {
  const systems = ["GT", "FT", "ICL"];
  const permutations: Label[][] = [
    ["A", "B", "C"],
    ["B", "C", "A"],
    ["C", "A", "B"],
    ["A", "C", "B"],
    ["B", "A", "C"],
    ["C", "B", "A"],
  ];
  const tasks: MockTaskSpec[] = Array.from({ length: taskCount }, (_, i) => {
    const perm = permutations[i % permutations.length];
    return {
      task_id: `V${i + 1}`,
      dialogue: `[doctor] case ${i + 1}\n[patient] details ${i + 1}`,
      notes: {
        GT: `CHIEF COMPLAINT\nhuman note ${i + 1}`,
        FT: `CHIEF COMPLAINT\ntuned note ${i + 1}`,
        ICL: `CHIEF COMPLAINT\nprompted note ${i + 1}`,
      },
      labels: { GT: perm[0], FT: perm[1], ICL: perm[2] },
    };
  });
  return new MockStudyServer(
    "mock-study",
    "Please assess the clinical notes A, B and C relative to the provided dialogue.",
    systems,
    tasks,
  );
}
