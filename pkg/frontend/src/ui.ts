/**
 * DOM rendering for the labeling tool.
 *
 * One image at a time at native aspect ratio with scroll/pinch zoom, the
 * study question, exactly two answer buttons, a browsable gallery of
 * already-seen images, and a progress line. No keyboard shortcuts for
 * answers (accidental rapid-fire judgments would taint a perceptual
 * study), and no accuracy feedback during the session.
 */

import { Judged } from "./api.js";
import { LabelerSession } from "./session.js";

export const ANSWER_REAL_LABEL = "looks realistic";
export const ANSWER_GENERATED_LABEL = "looks artificially generated";
export const RENDERED_EVENT = "camcast:rendered";

const ZOOM_MIN = 1.0;
const ZOOM_MAX = 8.0;
const ZOOM_STEP = 1.15;

export class LabelerApp {
  private zoom = 1.0;
  private previewUrl: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly session: LabelerSession,
  ) {}

  async start(): Promise<void> {
    await this.session.start();
    this.render();
  }

  private async answer(judged: Judged): Promise<void> {
    await this.session.answer(judged);
    this.zoom = 1.0;
    this.previewUrl = null;
    this.render();
  }

  private applyZoom(image: HTMLImageElement): void {
    image.style.transform = `scale(${this.zoom})`;
  }

  render(): void {
    this.root.textContent = "";
    const progress = this.session.progress;
    const header = document.createElement("header");
    const progressLine = document.createElement("p");
    progressLine.className = "progress";
    progressLine.textContent = progress
      ? `${progress.judged} of ${progress.assigned} judged`
      : "connecting";
    header.appendChild(progressLine);
    this.root.appendChild(header);

    if (this.session.done) {
      this.renderCompletion();
    } else if (this.session.current !== null) {
      this.renderItem();
    }
    this.root.dispatchEvent(new CustomEvent(RENDERED_EVENT, { bubbles: true }));
  }

  private renderItem(): void {
    const item = this.session.current;
    if (item === null) return;

    const figure = document.createElement("figure");
    figure.className = "viewer";
    const image = document.createElement("img");
    image.className = "study-image";
    image.src = this.previewUrl ?? item.image_url;
    image.alt = "study image";
    image.draggable = false;
    this.applyZoom(image);
    // Scroll (and trackpad pinch, which browsers report as ctrl+wheel)
    // zooms around the cursor.
    image.addEventListener("wheel", (event: WheelEvent) => {
      event.preventDefault();
      const factor = event.deltaY < 0 ? ZOOM_STEP : 1 / ZOOM_STEP;
      this.zoom = Math.min(ZOOM_MAX, Math.max(ZOOM_MIN, this.zoom * factor));
      this.applyZoom(image);
    });
    figure.appendChild(image);
    this.root.appendChild(figure);

    const question = document.createElement("p");
    question.className = "question";
    question.textContent = item.question;
    this.root.appendChild(question);

    const answers = document.createElement("div");
    answers.className = "answers";
    const previewing = this.previewUrl !== null;
    for (const [label, judged] of [
      [ANSWER_REAL_LABEL, "real"],
      [ANSWER_GENERATED_LABEL, "generated"],
    ] as const) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = "answer";
      button.dataset.judged = judged;
      button.textContent = label;
      // Answers apply to the current item only; while browsing the gallery
      // the buttons are disabled so a judgment cannot target the wrong image.
      button.disabled = previewing;
      button.addEventListener("click", () => {
        void this.answer(judged);
      });
      answers.appendChild(button);
    }
    this.root.appendChild(answers);

    this.renderGallery();
  }

  private renderGallery(): void {
    if (this.session.seen.length <= 1) return;
    const gallery = document.createElement("nav");
    gallery.className = "gallery";
    const hint = document.createElement("p");
    hint.textContent = "previously seen:";
    gallery.appendChild(hint);
    for (const seen of this.session.seen) {
      const thumb = document.createElement("img");
      thumb.className = "thumb";
      thumb.src = seen.imageUrl;
      thumb.alt = "previously seen image";
      thumb.addEventListener("click", () => {
        const current = this.session.current;
        this.previewUrl =
          current !== null && seen.imageUrl === current.image_url ? null : seen.imageUrl;
        this.zoom = 1.0;
        this.render();
      });
      gallery.appendChild(thumb);
    }
    if (this.previewUrl !== null) {
      const back = document.createElement("button");
      back.type = "button";
      back.className = "back-to-current";
      back.textContent = "back to current image";
      back.addEventListener("click", () => {
        this.previewUrl = null;
        this.render();
      });
      gallery.appendChild(back);
    }
    this.root.appendChild(gallery);
  }

  private renderCompletion(): void {
    const done = document.createElement("section");
    done.className = "completion";
    const message = document.createElement("h2");
    message.textContent = "All images judged, thank you!";
    done.appendChild(message);
    const progress = this.session.progress;
    if (progress !== null) {
      const summary = document.createElement("p");
      summary.textContent = `You judged ${progress.judged} of ${progress.assigned} assigned images.`;
      done.appendChild(summary);
    }
    this.root.appendChild(done);
  }
}
