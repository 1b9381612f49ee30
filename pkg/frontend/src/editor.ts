/** Editor state: draft polyline in frame coordinates, scale, mode.
 *
 * All geometry lives here, decoupled from the canvas so it can be driven
 * headlessly. The canvas layer forwards pointer positions in canvas px;
 * conversion to frame px happens on entry and clamping is recorded so the
 * view can flash a cue.
 */
import { ControlSpec, MAX_SCALE, Mode, validateControl } from "./control";

export interface DraftPoint {
  frame: number;
  x: number;
  y: number;
}

// Successive drag samples closer than this (frame px) are merged.
const MIN_SEGMENT_PX = 1.0;

export class Editor {
  frameWidth = 0;
  frameHeight = 0;
  clipFrames = 1;
  canvasWidth = 0;
  canvasHeight = 0;
  mode: Mode = "drag";
  scale = 1.0;
  points: DraftPoint[] = [];
  /** Set when the latest pointer position fell outside the frame. */
  lastClamped = false;

  private stroke: { x: number; y: number }[] | null = null;

  get hasImage(): boolean {
    return this.frameWidth > 0 && this.frameHeight > 0;
  }

  setImage(frameWidth: number, frameHeight: number, canvasWidth: number, canvasHeight: number): void {
    this.frameWidth = frameWidth;
    this.frameHeight = frameHeight;
    this.canvasWidth = canvasWidth;
    this.canvasHeight = canvasHeight;
    this.clear();
  }

  setClipFrames(n: number): void {
    this.clipFrames = Math.max(1, Math.floor(n));
    this.assignUniformFrames();
  }

  setMode(mode: Mode): void {
    if (mode !== this.mode) {
      this.mode = mode;
      this.clear();
    }
  }

  setScale(value: number): void {
    // slider can only produce (0, MAX_SCALE]; clamp defensively
    this.scale = Math.min(Math.max(value, 0.01), MAX_SCALE);
  }

  /** Canvas px -> frame px, clamped into the frame with the cue flag set.
   * Endpoint-to-endpoint scaling keeps the canvas edge on frame pixel W-1,
   * within 1 px of the plain frame/canvas ratio. */
  canvasToFrame(cx: number, cy: number): { x: number; y: number } {
    const rx = (this.frameWidth - 1) / Math.max(this.canvasWidth - 1, 1);
    const ry = (this.frameHeight - 1) / Math.max(this.canvasHeight - 1, 1);
    const x = cx * rx;
    const y = cy * ry;
    const xc = Math.min(Math.max(x, 0), this.frameWidth - 1);
    const yc = Math.min(Math.max(y, 0), this.frameHeight - 1);
    this.lastClamped = xc !== x || yc !== y;
    return { x: round2(xc), y: round2(yc) };
  }

  pointerDown(cx: number, cy: number): void {
    if (!this.hasImage) return;
    const p = this.canvasToFrame(cx, cy);
    if (this.mode === "click") {
      // click mode keeps a single point
      this.points = [{ frame: 0, x: p.x, y: p.y }];
      return;
    }
    this.stroke = [p];
  }

  pointerMove(cx: number, cy: number): void {
    if (!this.stroke) return;
    const p = this.canvasToFrame(cx, cy);
    const last = this.stroke[this.stroke.length - 1];
    if (Math.hypot(p.x - last.x, p.y - last.y) >= MIN_SEGMENT_PX) {
      this.stroke.push(p);
    }
  }

  pointerUp(): void {
    if (!this.stroke) return;
    for (const p of this.stroke) {
      this.points.push({ frame: 0, x: p.x, y: p.y });
    }
    this.stroke = null;
    this.assignUniformFrames();
  }

  /** Default assignment: indices uniformly spaced across the clip. */
  assignUniformFrames(): void {
    const n = this.points.length;
    if (n === 0) return;
    if (n === 1) {
      this.points[0].frame = 0;
      return;
    }
    // when the clip has fewer frames than points, drop extras from the tail
    if (this.clipFrames < n) {
      this.points = this.points.slice(0, this.clipFrames);
    }
    const m = this.points.length;
    const span = this.clipFrames - 1;
    for (let i = 0; i < m; i++) {
      this.points[i].frame = m === 1 ? 0 : Math.round((i * span) / (m - 1));
    }
    // uniform rounding cannot collide while m <= clipFrames, but guard anyway
    for (let i = 1; i < m; i++) {
      if (this.points[i].frame <= this.points[i - 1].frame) {
        this.points[i].frame = this.points[i - 1].frame + 1;
      }
    }
  }

  /** Per-point override, clamped so frame indices stay strictly increasing. */
  setPointFrame(index: number, frame: number): void {
    if (index < 0 || index >= this.points.length) return;
    const lo = index === 0 ? 0 : this.points[index - 1].frame + 1;
    const hi =
      index === this.points.length - 1
        ? this.clipFrames - 1
        : this.points[index + 1].frame - 1;
    this.points[index].frame = Math.min(Math.max(Math.floor(frame), lo), Math.max(lo, hi));
  }

  clear(): void {
    this.points = [];
    this.stroke = null;
    this.lastClamped = false;
  }

  canSubmit(): boolean {
    return this.hasImage && this.points.length > 0 && this.problem() === null;
  }

  problem(): string | null {
    if (this.points.length === 0) return "trajectory is empty";
    return validateControl(this.toControlSpec(), {
      frames: this.clipFrames,
      height: this.frameHeight,
      width: this.frameWidth,
    });
  }

  toControlSpec(): ControlSpec {
    return {
      mode: this.mode,
      scale: this.scale,
      points: this.points.map((p) => ({ frame: p.frame, x: p.x, y: p.y })),
    };
  }

  /** Import of a previously exported spec; replaces the draft wholesale. */
  loadControlSpec(spec: ControlSpec): void {
    this.mode = spec.mode;
    this.scale = spec.scale;
    this.points = spec.points.map((p) => ({ frame: p.frame, x: p.x, y: p.y }));
  }
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}
