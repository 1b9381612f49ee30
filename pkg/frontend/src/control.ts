/** Trajectory control spec: the JSON contract shared with the job service.
 *
 * Wire format:
 *   {"mode": "drag" | "click", "scale": 1.0,
 *    "points": [{"frame": 0, "x": 12.0, "y": 8.0}, ...]}
 */

export const MAX_SCALE = 8.0;
export const MODES = ["drag", "click"] as const;

export type Mode = (typeof MODES)[number];

export interface ControlPoint {
  frame: number;
  x: number;
  y: number;
}

export interface ControlSpec {
  mode: Mode;
  scale: number;
  points: ControlPoint[];
}

/** Returns a human-readable problem description, or null when valid.
 * Mirrors the service-side rules so a bad spec never leaves the editor. */
export function validateControl(
  spec: ControlSpec,
  bounds?: { frames: number; height: number; width: number },
): string | null {
  if (!MODES.includes(spec.mode)) {
    return `mode must be one of ${MODES.join(", ")}`;
  }
  if (spec.points.length === 0) {
    return "trajectory is empty";
  }
  if (!(spec.scale > 0 && spec.scale <= MAX_SCALE)) {
    return `scale must be in (0, ${MAX_SCALE}]`;
  }
  for (const p of spec.points) {
    if (!Number.isInteger(p.frame) || p.frame < 0) {
      return "frame indices must be integers >= 0";
    }
    if (!Number.isFinite(p.x) || !Number.isFinite(p.y)) {
      return "point coordinates must be finite";
    }
  }
  for (let i = 1; i < spec.points.length; i++) {
    if (spec.points[i].frame <= spec.points[i - 1].frame) {
      return "frame indices must be strictly increasing";
    }
  }
  if (bounds) {
    for (const p of spec.points) {
      if (p.frame >= bounds.frames) {
        return `point frame ${p.frame} >= clip length ${bounds.frames}`;
      }
      if (p.x < 0 || p.x > bounds.width - 1 || p.y < 0 || p.y > bounds.height - 1) {
        return `point (${p.x}, ${p.y}) outside frame bounds`;
      }
    }
  }
  return null;
}

/** Canonical serialization. The exported file and the POSTed control field
 * both come from this function, so the two are byte-identical by construction. */
export function serializeControl(spec: ControlSpec): string {
  return JSON.stringify({
    mode: spec.mode,
    scale: spec.scale,
    points: spec.points.map((p) => ({ frame: p.frame, x: p.x, y: p.y })),
  });
}

/** Strict parse of previously exported JSON; throws Error with a message
 * suitable for inline display. */
export function parseControl(text: string): ControlSpec {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (e) {
    throw new Error(`invalid JSON: ${(e as Error).message}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new Error("expected a JSON object");
  }
  const rec = obj as Record<string, unknown>;
  const mode = rec.mode;
  if (mode !== "drag" && mode !== "click") {
    throw new Error(`mode must be one of ${MODES.join(", ")}`);
  }
  if (!Array.isArray(rec.points)) {
    throw new Error("points must be a list");
  }
  const points: ControlPoint[] = rec.points.map((p, i) => {
    if (typeof p !== "object" || p === null) {
      throw new Error(`bad point at index ${i}`);
    }
    const q = p as Record<string, unknown>;
    const frame = Number(q.frame);
    const x = Number(q.x);
    const y = Number(q.y);
    if (!Number.isInteger(frame) || !Number.isFinite(x) || !Number.isFinite(y)) {
      throw new Error(`bad point at index ${i}`);
    }
    return { frame, x, y };
  });
  const scale = rec.scale === undefined ? 1.0 : Number(rec.scale);
  if (!Number.isFinite(scale)) {
    throw new Error("bad scale");
  }
  const spec: ControlSpec = { mode, scale, points };
  const problem = validateControl(spec);
  if (problem) {
    throw new Error(problem);
  }
  return spec;
}
