/** Page wiring: canvas drawing, form fields, submit/poll lifecycle.
 *
 * Everything stateful funnels through Editor; this layer only reflects it
 * into the DOM and talks to the service.
 */
import { frameUrl, pollJob, RequestError, submitCompose } from "./api";
import { parseControl, serializeControl } from "./control";
import { Editor } from "./editor";

export interface AppHandles {
  editor: Editor;
  refresh: () => void;
  submit: () => Promise<void>;
  exportSpec: () => string;
  importSpec: (text: string) => void;
  /** Last control JSON handed to the service, for byte-level comparison. */
  lastPosted: () => string | null;
  lastExported: () => string | null;
}

const CANVAS_W = 384;
const CANVAS_H = 384;

export function initApp(doc: Document): AppHandles {
  const $ = <T extends HTMLElement>(id: string) => doc.getElementById(id) as T;

  const canvas = $<HTMLCanvasElement>("frame-canvas");
  const fileInput = $<HTMLInputElement>("frame-file");
  const clipFramesInput = $<HTMLInputElement>("clip-frames");
  const bgInput = $<HTMLInputElement>("bg-path");
  const fgInput = $<HTMLInputElement>("fg-path");
  const maskInput = $<HTMLInputElement>("mask-path");
  const ckptInput = $<HTMLInputElement>("ckpt-path");
  const stepsInput = $<HTMLInputElement>("steps");
  const seedInput = $<HTMLInputElement>("seed");
  const scaleInput = $<HTMLInputElement>("scale");
  const scaleReadout = $<HTMLSpanElement>("scale-readout");
  const modeDrag = $<HTMLInputElement>("mode-drag");
  const modeClick = $<HTMLInputElement>("mode-click");
  const pointsBody = $<HTMLTableSectionElement>("points-body");
  const clearBtn = $<HTMLButtonElement>("clear-btn");
  const exportBtn = $<HTMLButtonElement>("export-btn");
  const importInput = $<HTMLInputElement>("import-file");
  const submitBtn = $<HTMLButtonElement>("submit-btn");
  const validationMsg = $<HTMLDivElement>("validation-msg");
  const statusBanner = $<HTMLDivElement>("status-banner");
  const resultPanel = $<HTMLDivElement>("result-panel");
  const inputFrameImg = $<HTMLImageElement>("input-frame");
  const outputFrameImg = $<HTMLImageElement>("output-frame");
  const scrubber = $<HTMLInputElement>("scrubber");
  const scrubberReadout = $<HTMLSpanElement>("scrubber-readout");

  const editor = new Editor();
  editor.setClipFrames(Number(clipFramesInput.value) || 1);
  let image: HTMLImageElement | null = null;
  let inFlight = false;
  let postedControl: string | null = null;
  let exportedControl: string | null = null;
  let jobId: string | null = null;

  function setStatus(message: string, kind: "idle" | "busy" | "error" | "ok" = "idle") {
    statusBanner.textContent = message;
    statusBanner.dataset.kind = kind;
  }

  function draw() {
    const ctx = canvas.getContext("2d");
    if (!ctx) return; // headless test environment
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (image) {
      ctx.drawImage(image, 0, 0, canvas.width, canvas.height);
    }
    if (editor.points.length === 0) return;
    const sx = canvas.width / editor.frameWidth;
    const sy = canvas.height / editor.frameHeight;
    ctx.strokeStyle = "#ff3355";
    ctx.lineWidth = 2;
    ctx.beginPath();
    editor.points.forEach((p, i) => {
      const cx = p.x * sx;
      const cy = p.y * sy;
      if (i === 0) ctx.moveTo(cx, cy);
      else ctx.lineTo(cx, cy);
    });
    ctx.stroke();
    ctx.fillStyle = "#ff3355";
    for (const p of editor.points) {
      ctx.beginPath();
      ctx.arc(p.x * sx, p.y * sy, 3, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  function renderPoints() {
    pointsBody.textContent = "";
    editor.points.forEach((p, i) => {
      const row = doc.createElement("tr");
      const frameCell = doc.createElement("td");
      const frameField = doc.createElement("input");
      frameField.type = "number";
      frameField.min = "0";
      frameField.max = String(editor.clipFrames - 1);
      frameField.value = String(p.frame);
      frameField.addEventListener("change", () => {
        editor.setPointFrame(i, Number(frameField.value));
        refresh();
      });
      frameCell.appendChild(frameField);
      const xCell = doc.createElement("td");
      xCell.textContent = p.x.toFixed(2);
      const yCell = doc.createElement("td");
      yCell.textContent = p.y.toFixed(2);
      row.append(frameCell, xCell, yCell);
      pointsBody.appendChild(row);
    });
  }

  function refresh() {
    renderPoints();
    draw();
    const problem = editor.points.length ? editor.problem() : null;
    validationMsg.textContent = problem ?? "";
    submitBtn.disabled = !editor.canSubmit() || inFlight;
    exportBtn.disabled = !editor.canSubmit();
    scaleReadout.textContent = editor.scale.toFixed(2);
  }

  function flashClampCue() {
    canvas.classList.add("clamped");
    setTimeout(() => canvas.classList.remove("clamped"), 400);
  }

  // ---- image loading -----------------------------------------------------
  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const url = URL.createObjectURL(file);
    const img = new Image();
    img.onload = () => {
      image = img;
      editor.setImage(img.naturalWidth, img.naturalHeight, CANVAS_W, CANVAS_H);
      inputFrameImg.src = url;
      setStatus(`frame loaded (${img.naturalWidth}x${img.naturalHeight})`);
      refresh();
    };
    img.src = url;
  });

  clipFramesInput.addEventListener("change", () => {
    editor.setClipFrames(Number(clipFramesInput.value) || 1);
    refresh();
  });

  // ---- pointer handling ----------------------------------------------------
  function canvasPos(ev: PointerEvent): { x: number; y: number } {
    const rect = canvas.getBoundingClientRect();
    const scaleX = rect.width > 0 ? canvas.width / rect.width : 1;
    const scaleY = rect.height > 0 ? canvas.height / rect.height : 1;
    return { x: (ev.clientX - rect.left) * scaleX, y: (ev.clientY - rect.top) * scaleY };
  }

  canvas.addEventListener("pointerdown", (ev) => {
    const p = canvasPos(ev);
    editor.pointerDown(p.x, p.y);
    if (editor.lastClamped) flashClampCue();
    canvas.setPointerCapture?.(ev.pointerId);
    refresh();
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (ev.buttons === 0) return;
    const p = canvasPos(ev);
    editor.pointerMove(p.x, p.y);
    if (editor.lastClamped) flashClampCue();
    draw();
  });
  canvas.addEventListener("pointerup", () => {
    editor.pointerUp();
    refresh();
  });

  // ---- controls --------------------------------------------------------
  modeDrag.addEventListener("change", () => {
    if (modeDrag.checked) {
      editor.setMode("drag");
      refresh();
    }
  });
  modeClick.addEventListener("change", () => {
    if (modeClick.checked) {
      editor.setMode("click");
      refresh();
    }
  });
  scaleInput.addEventListener("input", () => {
    editor.setScale(Number(scaleInput.value));
    refresh();
  });
  clearBtn.addEventListener("click", () => {
    editor.clear();
    refresh();
  });

  // ---- export / import ---------------------------------------------------
  function exportSpec(): string {
    const text = serializeControl(editor.toControlSpec());
    exportedControl = text;
    if (typeof URL.createObjectURL === "function") {
      const blob = new Blob([text], { type: "application/json" });
      const a = doc.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = "control.json";
      a.click();
    }
    return text;
  }
  exportBtn.addEventListener("click", () => {
    exportSpec();
  });

  function importSpec(text: string): void {
    try {
      const spec = parseControl(text);
      editor.loadControlSpec(spec);
      scaleInput.value = String(spec.scale);
      (spec.mode === "drag" ? modeDrag : modeClick).checked = true;
      validationMsg.textContent = "";
    } catch (e) {
      validationMsg.textContent = `import failed: ${(e as Error).message}`;
    }
    refresh();
  }
  importInput.addEventListener("change", async () => {
    const file = importInput.files?.[0];
    if (!file) return;
    importSpec(await file.text());
  });

  // ---- submit / poll ------------------------------------------------------
  async function submit(): Promise<void> {
    if (inFlight || !editor.canSubmit()) return;
    inFlight = true;
    refresh();
    validationMsg.textContent = "";
    const control = serializeControl(editor.toControlSpec());
    postedControl = control;
    const req = {
      background: bgInput.value.trim(),
      foreground: fgInput.value.trim(),
      control,
      ...(maskInput.value.trim() ? { fg_mask: maskInput.value.trim() } : {}),
      ...(ckptInput.value.trim() ? { checkpoint: ckptInput.value.trim() } : {}),
      ...(stepsInput.value ? { steps: Number(stepsInput.value) } : {}),
      ...(seedInput.value ? { seed: Number(seedInput.value) } : {}),
    };
    let inlineDetail: string | null = null;
    try {
      setStatus("submitting job", "busy");
      const { id } = await submitCompose(req);
      jobId = id;
      const info = await pollJob(id, {
        onStatus: (m) => setStatus(m, "busy"),
      });
      if (info.status === "failed") {
        setStatus(`job failed: ${info.error ?? "unknown error"}`, "error");
      } else {
        setStatus(`job ${id} done`, "ok");
        showResult(id);
      }
    } catch (e) {
      if (e instanceof RequestError && e.status === 400) {
        inlineDetail = e.detail;
        setStatus("rejected by service", "error");
      } else {
        setStatus(`service error: ${(e as Error).message}`, "error");
      }
    } finally {
      inFlight = false;
      refresh();
    }
    // after refresh so the draft's own (absent) problem cannot clear it
    if (inlineDetail !== null) {
      validationMsg.textContent = inlineDetail;
    }
  }
  submitBtn.addEventListener("click", () => {
    void submit();
  });

  function showResult(id: string) {
    resultPanel.hidden = false;
    scrubber.max = String(editor.clipFrames - 1);
    scrubber.value = "0";
    outputFrameImg.src = frameUrl(id, 0);
    scrubberReadout.textContent = "0";
  }
  scrubber.addEventListener("input", () => {
    if (!jobId) return;
    const n = Number(scrubber.value);
    outputFrameImg.src = frameUrl(jobId, n);
    scrubberReadout.textContent = String(n);
  });

  setStatus("load a first frame to begin");
  refresh();
  return {
    editor,
    refresh,
    submit,
    exportSpec,
    importSpec,
    lastPosted: () => postedControl,
    lastExported: () => exportedControl,
  };
}

declare global {
  interface Window {
    __app?: AppHandles;
  }
}

if (typeof document !== "undefined" && document.getElementById("frame-canvas")) {
  window.__app = initApp(document);
}
