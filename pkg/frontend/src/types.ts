// Wire types for the annotation API.

export type Label = "A" | "B" | "C";

// The seven legal annotation choices; pair spellings are fixed (AB, BC, CA).
export type Choice = "A" | "B" | "C" | "AB" | "BC" | "CA" | "ABC";

export interface ChoiceOption {
  display: string;
  value: Choice;
}

export const CHOICE_OPTIONS: ChoiceOption[] = [
  { display: "A", value: "A" },
  { display: "B", value: "B" },
  { display: "C", value: "C" },
  { display: "A/B", value: "AB" },
  { display: "B/C", value: "BC" },
  { display: "C/A", value: "CA" },
  { display: "A/B/C", value: "ABC" },
];

export const LEGAL_CHOICES: ReadonlySet<string> = new Set(
  CHOICE_OPTIONS.map((option) => option.value),
);

export interface StudyInfo {
  study_id: string;
  instructions_text: string;
  task_count: number;
}

export interface NotePanel {
  label: Label;
  text: string;
}

export interface TaskPayload {
  task_id: string;
  dialogue: string;
  notes: NotePanel[];
  progress?: { done: number; total: number };
}

export interface DoneMarker {
  done: true;
  total: number;
}

export type NextTask = TaskPayload | DoneMarker;

export function isDone(next: NextTask): next is DoneMarker {
  return (next as DoneMarker).done === true;
}

export interface AnnotationBody {
  annotator_id: string;
  task_id: string;
  choice: Choice;
}
