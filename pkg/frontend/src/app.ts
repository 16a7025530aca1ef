import { ApiError, StudioApi } from "./api.js";
import { StudioController } from "./controller.js";
import { Rect, cropPixels, cropSizeProblem, snapToSquare } from "./crop.js";
import { StudioStore } from "./state.js";
import { ImageRef, MIN_PATCH_SIDE } from "./types.js";

const SESSION_KEY = "fashiontex.session";

// The page can be hosted anywhere; "?service=http://host:port" points it at
// the API when the two are not behind one origin.
const serviceUrl =
  new URLSearchParams(window.location.search).get("service") ?? window.location.origin;
const api = new StudioApi(serviceUrl);
const store = new StudioStore();
const controller = new StudioController(api, store);

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const portraitInput = must<HTMLInputElement>("portrait-input");
const uploadError = must<HTMLDivElement>("upload-error");
const sessionBadge = must<HTMLDivElement>("session-badge");
const upperSelect = must<HTMLSelectElement>("upper-select");
const lowerSelect = must<HTMLSelectElement>("lower-select");
const freeText = must<HTMLInputElement>("free-text");
const promptPreview = must<HTMLDivElement>("prompt-preview");
const promptError = must<HTMLDivElement>("prompt-error");
const swatchInput = must<HTMLInputElement>("swatch-input");
const tray = must<HTMLDivElement>("tray");
const swatchError = must<HTMLDivElement>("swatch-error");
const cropSource = must<HTMLSelectElement>("crop-source");
const cropCanvas = must<HTMLCanvasElement>("crop-canvas");
const cropHint = must<HTMLDivElement>("crop-hint");
const editButton = must<HTMLButtonElement>("edit-button");
const editError = must<HTMLDivElement>("edit-error");
const sessionPair = must<HTMLDivElement>("session-pair");
const timeline = must<HTMLDivElement>("timeline");
const recoverError = must<HTMLDivElement>("recover-error");
const compareA = must<HTMLSelectElement>("compare-a");
const compareB = must<HTMLSelectElement>("compare-b");
const compareButton = must<HTMLButtonElement>("compare-button");
const compareStage = must<HTMLDivElement>("compare-stage");
const compareBottom = must<HTMLImageElement>("compare-bottom");
const compareTop = must<HTMLDivElement>("compare-top");
const compareTopImg = must<HTMLImageElement>("compare-top-img");
const compareSlider = must<HTMLInputElement>("compare-slider");

function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

/** Data URL around the service's exact base64 payload; no re-encode. */
function pngUrl(base64: string): string {
  return `data:image/png;base64,${base64}`;
}

function sourceUrl(ref: ImageRef): string | null {
  const source = store.imageSource(ref);
  if (!source) return null;
  if (source.kind === "png-base64") return pngUrl(source.base64);
  return pngUrl(bytesToBase64(source.bytes));
}

function refLabel(ref: ImageRef): string {
  switch (ref.kind) {
    case "original":
      return "original";
    case "preview":
      return "inverted preview";
    case "edit":
      return `edit ${ref.index}`;
    case "recovered":
      return `recovered ${ref.index}`;
  }
}

function displayableRefs(): ImageRef[] {
  const refs: ImageRef[] = [{ kind: "original" }, { kind: "preview" }];
  store.history.forEach((entry) => {
    refs.push({ kind: "edit", index: entry.editIndex });
    if (entry.recoveredBase64 !== null) {
      refs.push({ kind: "recovered", index: entry.editIndex });
    }
  });
  return refs.filter((ref) => store.imageSource(ref) !== null);
}

// ---- rendering -------------------------------------------------------------

function renderVocabulary(): void {
  const vocabulary = store.vocabulary;
  if (!vocabulary) return;
  for (const [select, tags] of [
    [upperSelect, vocabulary.upper],
    [lowerSelect, vocabulary.lower],
  ] as const) {
    const current = select.value;
    select.replaceChildren(new Option("(none)", ""));
    for (const tag of tags) select.append(new Option(tag, tag));
    select.value = current;
  }
}

function renderSession(): void {
  uploadError.textContent = store.uploadProblem ?? "";
  sessionBadge.textContent = store.sessionId ? `session ${store.sessionId}` : "";
  sessionPair.replaceChildren();
  for (const ref of [{ kind: "original" } as const, { kind: "preview" } as const]) {
    const url = sourceUrl(ref);
    if (!url) continue;
    const figure = document.createElement("figure");
    const img = document.createElement("img");
    img.src = url;
    img.alt = refLabel(ref);
    const caption = document.createElement("figcaption");
    caption.textContent = refLabel(ref);
    figure.append(img, caption);
    sessionPair.append(figure);
  }
}

function renderPrompt(): void {
  let assembled: string | null = null;
  let problem: string | null = null;
  try {
    assembled = store.assembledPrompt();
  } catch (err) {
    problem = err instanceof Error ? err.message : String(err);
  }
  promptPreview.textContent = assembled ? `prompt: "${assembled}"` : "";
  promptError.textContent = problem ?? "";
  editButton.disabled = !store.canEdit();
  editError.textContent =
    store.editProblem ?? (store.sessionId ? store.conditionProblem() ?? "" : "upload a portrait first");
}

function renderTray(): void {
  tray.replaceChildren();
  for (const swatch of store.tray) {
    const cell = document.createElement("div");
    cell.className = `swatch ${swatch.assigned ?? ""}`;
    const img = document.createElement("img");
    img.src = pngUrl(swatch.base64);
    img.alt = `swatch ${swatch.id}`;
    const row = document.createElement("div");
    for (const side of ["upper", "lower"] as const) {
      const btn = document.createElement("button");
      btn.textContent = side;
      btn.onclick = () => store.assignSwatch(swatch.id, swatch.assigned === side ? null : side);
      row.append(btn);
    }
    const drop = document.createElement("button");
    drop.textContent = "x";
    drop.onclick = () => store.removeSwatch(swatch.id);
    row.append(drop);
    cell.append(img, row);
    tray.append(cell);
  }
}

function renderTimeline(): void {
  recoverError.textContent = store.recoverProblem ?? "";
  timeline.replaceChildren();
  for (const entry of store.history) {
    const card = document.createElement("div");
    card.className = "card";
    const images = document.createElement("div");
    images.className = "images";
    const editUrl = sourceUrl({ kind: "edit", index: entry.editIndex });
    if (editUrl) {
      const img = document.createElement("img");
      img.src = editUrl;
      img.alt = `edit ${entry.editIndex}`;
      images.append(img);
    }
    const recoveredUrl = sourceUrl({ kind: "recovered", index: entry.editIndex });
    if (recoveredUrl) {
      const img = document.createElement("img");
      img.src = recoveredUrl;
      img.alt = `recovered ${entry.editIndex}`;
      images.append(img);
    }
    const meta = document.createElement("div");
    meta.className = "meta";
    meta.textContent = `#${entry.editIndex} ${JSON.stringify(entry.condition)}`;
    const recoverBtn = document.createElement("button");
    recoverBtn.textContent = entry.recovering
      ? "recovering..."
      : entry.recovered
        ? "recovered (run again)"
        : "recover identity";
    recoverBtn.disabled = !store.canRecover(entry.editIndex);
    recoverBtn.onclick = () => {
      void controller.recover(entry.editIndex).catch(() => undefined);
    };
    card.append(images, meta, recoverBtn);
    timeline.append(card);
  }
}

function renderCompare(): void {
  const refs = displayableRefs();
  for (const select of [compareA, compareB]) {
    const current = select.value;
    select.replaceChildren();
    refs.forEach((ref, i) => select.append(new Option(refLabel(ref), String(i))));
    if (current && Number(current) < refs.length) select.value = current;
  }
  compareButton.disabled = refs.length < 2;
  if (store.comparison) {
    const [a, b] = store.comparison;
    const left = sourceUrl(a);
    const right = sourceUrl(b);
    if (left && right) {
      compareStage.hidden = false;
      compareTopImg.src = left;
      compareBottom.src = right;
      applySlider();
      return;
    }
  }
  compareStage.hidden = true;
}

function applySlider(): void {
  const pct = Number(compareSlider.value);
  compareTop.style.clipPath = `inset(0 ${100 - pct}% 0 0)`;
}

function render(): void {
  renderVocabulary();
  renderSession();
  renderPrompt();
  renderTray();
  renderTimeline();
  renderCompare();
  renderCropSources();
}

store.subscribe(render);

// ---- event wiring ----------------------------------------------------------

portraitInput.addEventListener("change", () => {
  const file = portraitInput.files?.[0];
  if (!file) return;
  void file.arrayBuffer().then(async (buffer) => {
    try {
      const sessionId = await controller.uploadPortrait(new Uint8Array(buffer), file.name);
      localStorage.setItem(SESSION_KEY, sessionId);
    } catch {
      // the store already holds the inline message
    }
  });
});

upperSelect.addEventListener("change", () => store.selectUpper(upperSelect.value || null));
lowerSelect.addEventListener("change", () => store.selectLower(lowerSelect.value || null));
freeText.addEventListener("input", () => store.setFreeText(freeText.value));

editButton.addEventListener("click", () => {
  void controller.submitEdit().catch(() => undefined);
});

swatchInput.addEventListener("change", () => {
  swatchError.textContent = "";
  for (const file of Array.from(swatchInput.files ?? [])) {
    void file.arrayBuffer().then(async (buffer) => {
      const bytes = new Uint8Array(buffer);
      const bitmap = await createImageBitmap(new Blob([buffer], { type: file.type }));
      try {
        if (bitmap.width !== bitmap.height) {
          throw new Error(`swatch must be square, got ${bitmap.width}x${bitmap.height}`);
        }
        store.addSwatch(bytesToBase64(bytes), "upload", bitmap.width);
      } catch (err) {
        swatchError.textContent = err instanceof Error ? err.message : String(err);
      } finally {
        bitmap.close();
      }
    });
  }
});

// ---- crop tool ---------------------------------------------------------------

let cropDrag: { startX: number; startY: number } | null = null;
let cropImage: ImageData | null = null;

function renderCropSources(): void {
  const refs = displayableRefs();
  const current = cropSource.value;
  cropSource.replaceChildren(new Option("(choose)", ""));
  refs.forEach((ref, i) => cropSource.append(new Option(refLabel(ref), String(i))));
  if (current && Number(current) < refs.length) cropSource.value = current;
}

cropSource.addEventListener("change", () => {
  cropImage = null;
  cropHint.textContent = "";
  const refs = displayableRefs();
  const ref = refs[Number(cropSource.value)];
  if (cropSource.value === "" || !ref) return;
  const url = sourceUrl(ref);
  if (!url) return;
  const image = new Image();
  image.onload = () => {
    cropCanvas.width = image.naturalWidth;
    cropCanvas.height = image.naturalHeight;
    const ctx = cropCanvas.getContext("2d");
    if (!ctx) return;
    ctx.drawImage(image, 0, 0);
    cropImage = ctx.getImageData(0, 0, cropCanvas.width, cropCanvas.height);
  };
  image.src = url;
});

function canvasPoint(event: MouseEvent): { x: number; y: number } {
  const box = cropCanvas.getBoundingClientRect();
  return {
    x: ((event.clientX - box.left) / box.width) * cropCanvas.width,
    y: ((event.clientY - box.top) / box.height) * cropCanvas.height,
  };
}

cropCanvas.addEventListener("mousedown", (event) => {
  const { x, y } = canvasPoint(event);
  cropDrag = { startX: x, startY: y };
});

cropCanvas.addEventListener("mouseup", (event) => {
  if (!cropDrag || !cropImage) return;
  const { x, y } = canvasPoint(event);
  const drag: Rect = {
    x: cropDrag.startX,
    y: cropDrag.startY,
    width: x - cropDrag.startX,
    height: y - cropDrag.startY,
  };
  cropDrag = null;
  const snapped = snapToSquare(drag, cropImage.width, cropImage.height);
  const problem = cropSizeProblem(snapped);
  if (problem) {
    cropHint.textContent = problem;
    return;
  }
  cropHint.textContent = "";
  const patch = cropPixels(
    { width: cropImage.width, height: cropImage.height, data: cropImage.data },
    snapped,
  );
  const out = document.createElement("canvas");
  out.width = patch.width;
  out.height = patch.height;
  const ctx = out.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(patch.data, patch.width, patch.height), 0, 0);
  out.toBlob((blob) => {
    if (!blob) return;
    void blob.arrayBuffer().then((buffer) => {
      store.addSwatch(bytesToBase64(new Uint8Array(buffer)), "crop", patch.width);
    });
  }, "image/png");
});

cropCanvas.title = `drag a square of at least ${MIN_PATCH_SIDE} px`;

compareButton.addEventListener("click", () => {
  const refs = displayableRefs();
  const a = refs[Number(compareA.value)];
  const b = refs[Number(compareB.value)];
  if (!a || !b) return;
  try {
    store.setComparison(a, b);
  } catch (err) {
    recoverError.textContent = err instanceof Error ? err.message : String(err);
  }
});

compareSlider.addEventListener("input", applySlider);

// ---- boot -------------------------------------------------------------------

async function boot(): Promise<void> {
  try {
    await controller.init();
  } catch (err) {
    uploadError.textContent = `service unreachable: ${err instanceof Error ? err.message : err}`;
    return;
  }
  const stored = localStorage.getItem(SESSION_KEY);
  if (stored) {
    try {
      await controller.rehydrate(stored);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        localStorage.removeItem(SESSION_KEY);
      }
    }
  }
  render();
}

void boot();
