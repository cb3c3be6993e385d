// Annotation flow: enter an annotator id, then loop over blinded tasks
// (dialogue + notes A/B/C), submitting one of the seven preference choices
// per task until the server reports completion.
//
// All content is inserted via textContent, and the client holds no state
// beyond the in-flight task and selection; the server log is the single
// source of truth.

import { ApiClient, ApiError } from "./api.js";
import {
  CHOICE_OPTIONS,
  type Choice,
  type NextTask,
  type StudyInfo,
  type TaskPayload,
  isDone,
} from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class AnnotationApp {
  private annotatorId = "";
  private study: StudyInfo | null = null;
  private currentTask: TaskPayload | null = null;
  private selectedChoice: Choice | null = null;
  private notice = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  async start(): Promise<void> {
    try {
      this.study = await this.api.getStudy();
    } catch {
      this.renderRetry("Could not reach the study server.", () => this.start());
      return;
    }
    this.renderLogin();
  }

  /** Fetch and show the next task for the current annotator. */
  async loadNext(): Promise<void> {
    let next: NextTask;
    try {
      next = await this.api.nextTask(this.annotatorId);
    } catch {
      this.renderRetry("Network failure while fetching the next task.", () =>
        this.loadNext(),
      );
      return;
    }
    if (isDone(next)) {
      this.renderDone(next.total);
      return;
    }
    this.currentTask = next;
    this.selectedChoice = null;
    this.renderTask(next);
  }

  private async submit(): Promise<void> {
    const task = this.currentTask;
    const choice = this.selectedChoice;
    if (!task || !choice) return;
    let status: number;
    try {
      status = await this.api.submitAnnotation({
        annotator_id: this.annotatorId,
        task_id: task.task_id,
        choice,
      });
    } catch (error) {
      if (error instanceof ApiError) {
        // validation failure: keep the selection, show the error inline
        this.renderTask(task, `Submission rejected (${error.status}); please retry.`);
      } else {
        this.renderRetry("Network failure while submitting; nothing was lost.", () =>
          this.submit(),
        );
      }
      return;
    }
    this.notice = status === 409 ? "Task was already annotated; moving on." : "";
    await this.loadNext();
  }

  private clear(): void {
    this.root.textContent = "";
  }

  private renderLogin(): void {
    this.clear();
    const panel = el("div", "panel login");
    panel.appendChild(el("h1", undefined, "Clinical note preference study"));
    panel.appendChild(
      el("p", undefined, "Enter your annotator id to begin or resume."),
    );
    const input = el("input");
    input.id = "annotator-id";
    input.setAttribute("placeholder", "annotator id");
    const button = el("button", undefined, "Start");
    button.id = "start";
    button.addEventListener("click", () => {
      const value = input.value.trim();
      if (!value) return;
      this.annotatorId = value;
      void this.loadNext();
    });
    panel.append(input, button);
    this.root.appendChild(panel);
  }

  private renderInstructions(): HTMLElement {
    const details = el("details", "instructions");
    details.appendChild(el("summary", undefined, "Instructions"));
    const body = el("pre", "instructions-text");
    body.textContent = this.study ? this.study.instructions_text : "";
    details.appendChild(body);
    return details;
  }

  private renderTask(task: TaskPayload, inlineError = ""): void {
    this.clear();
    const container = el("div", "task");

    const header = el("div", "task-header");
    const total = this.study?.task_count ?? task.progress?.total ?? 0;
    const done = task.progress?.done ?? 0;
    const progress = el("span", "progress", `${done + 1} / ${total}`);
    progress.id = "progress";
    header.appendChild(el("h1", undefined, "Compare the clinical notes"));
    header.appendChild(progress);
    container.appendChild(header);

    if (this.notice) {
      container.appendChild(el("p", "notice", this.notice));
      this.notice = "";
    }
    container.appendChild(this.renderInstructions());

    const dialogue = el("details", "dialogue");
    dialogue.setAttribute("open", "");
    dialogue.appendChild(el("summary", undefined, "Dialogue"));
    const dialogueText = el("pre", "dialogue-text");
    dialogueText.textContent = task.dialogue;
    dialogue.appendChild(dialogueText);
    container.appendChild(dialogue);

    const panels = el("div", "notes");
    for (const note of task.notes) {
      const panel = el("section", "note-panel");
      panel.appendChild(el("h2", undefined, `Clinical note ${note.label}`));
      const body = el("pre", "note-text");
      body.textContent = note.text;
      panel.appendChild(body);
      panels.appendChild(panel);
    }
    container.appendChild(panels);

    const form = el("div", "choices");
    form.appendChild(el("p", undefined, "Which note(s) do you prefer?"));
    const submit = el("button", undefined, "Submit");
    submit.id = "submit";
    submit.disabled = this.selectedChoice === null;
    for (const option of CHOICE_OPTIONS) {
      const label = el("label", "choice");
      const radio = el("input");
      radio.type = "radio";
      radio.name = "choice";
      radio.value = option.value;
      radio.checked = this.selectedChoice === option.value;
      radio.addEventListener("change", () => {
        this.selectedChoice = option.value;
        submit.disabled = false;
      });
      label.append(radio, document.createTextNode(` ${option.display}`));
      form.appendChild(label);
    }
    if (inlineError) {
      const error = el("p", "error", inlineError);
      error.id = "inline-error";
      form.appendChild(error);
    }
    submit.addEventListener("click", () => {
      submit.disabled = true;
      void this.submit();
    });
    form.appendChild(submit);
    container.appendChild(form);

    this.root.appendChild(container);
  }

  private renderDone(total: number): void {
    this.clear();
    const panel = el("div", "panel done");
    panel.appendChild(el("h1", undefined, "All tasks annotated"));
    panel.appendChild(
      el("p", undefined, `You completed all ${total} tasks. Thank you.`),
    );
    panel.querySelector("h1")?.setAttribute("id", "done");
    this.root.appendChild(panel);
  }

  private renderRetry(message: string, retry: () => Promise<void> | void): void {
    // the banner replaces the view but keeps annotator/task/selection state
    const banner = el("div", "retry-banner");
    banner.id = "retry-banner";
    banner.appendChild(el("p", undefined, message));
    const button = el("button", undefined, "Retry");
    button.id = "retry";
    button.addEventListener("click", () => {
      banner.remove();
      void retry();
    });
    banner.appendChild(button);
    this.root.prepend(banner);
  }
}
