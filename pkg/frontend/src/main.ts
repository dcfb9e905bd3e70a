import { ApiClient, VersionConflictError } from './api.js';
import { AnnotatorCanvas } from './canvas.js';
import { EditorState, commit, loadCamera, overlayPredictions } from './editor.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const ui = {
  serviceUrl: el<HTMLInputElement>('service-url'),
  cameraId: el<HTMLInputElement>('camera-id'),
  loadBtn: el<HTMLButtonElement>('load-btn'),
  frameInput: el<HTMLInputElement>('frame-input'),
  commitBtn: el<HTMLButtonElement>('commit-btn'),
  overlayBtn: el<HTMLButtonElement>('overlay-btn'),
  deleteBtn: el<HTMLButtonElement>('delete-btn'),
  renameInput: el<HTMLInputElement>('rename-input'),
  renameBtn: el<HTMLButtonElement>('rename-btn'),
  banner: el<HTMLDivElement>('banner'),
  status: el<HTMLDivElement>('status'),
  canvas: el<HTMLCanvasElement>('annotator-canvas'),
};

let api = new ApiClient(ui.serviceUrl.value || 'http://127.0.0.1:8000');
let editor = new EditorState('cam1', 1280, 720);
let referenceFrame: Blob | null = null;
const canvas = new AnnotatorCanvas(ui.canvas, editor);

function banner(message: string, kind: 'error' | 'warn' | 'ok' = 'error'): void {
  ui.banner.textContent = message;
  ui.banner.className = `banner ${kind}`;
  ui.banner.hidden = !message;
}

function refreshControls(): void {
  const issues = editor.validationIssues();
  ui.commitBtn.disabled = !editor.commitEnabled || !editor.dirty;
  ui.overlayBtn.disabled = editor.lastCommittedVersion < 1 || !referenceFrame;
  ui.deleteBtn.disabled = editor.selection === null;
  ui.renameBtn.disabled = editor.selection === null;
  const parts = [
    `v${editor.lastCommittedVersion}`,
    `${editor.spots.length} spot(s)`,
    editor.dirty ? 'unsaved changes' : 'clean',
  ];
  if (issues.size) {
    const first = issues.entries().next().value as [string, string[]];
    parts.push(`invalid: ${first[0]} (${first[1].join('; ')})`);
  }
  ui.status.textContent = parts.join(' | ');
}

canvas.onChange = refreshControls;
canvas.onWarning = (m) => banner(m, 'warn');

async function doLoad(): Promise<void> {
  api = new ApiClient(ui.serviceUrl.value);
  try {
    const loaded = await loadCamera(api, ui.cameraId.value);
    editor = loaded.editor;
    referenceFrame = loaded.frame;
    canvas.setEditor(editor);
    await canvas.setFrame(referenceFrame);
    banner(
      referenceFrame ? '' : 'no reference frame yet: upload one to start drawing',
      'warn',
    );
    refreshControls();
  } catch (err) {
    banner(`service unreachable: ${(err as Error).message} - check the URL and retry`);
  }
}

async function doCommit(): Promise<void> {
  try {
    const version = await commit(api, editor);
    banner(`committed version ${version}`, 'ok');
  } catch (err) {
    if (err instanceof VersionConflictError) {
      const reload = window.confirm(
        `${err.message}\n\nReload the server copy (discarding local edits)?`,
      );
      if (reload) await doLoad();
      return;
    }
    banner((err as Error).message);
  }
  refreshControls();
}

async function doOverlay(): Promise<void> {
  if (!referenceFrame) return;
  try {
    const result = await overlayPredictions(api, editor, referenceFrame);
    canvas.setOverlay(result);
    banner(
      `overlay: ${result.spots.filter((s) => s.label === 'occupied').length} occupied / ` +
        `${result.spots.filter((s) => s.label === 'empty').length} empty ` +
        `(${result.latency_ms.toFixed(0)} ms, map v${result.spot_map_version})`,
      'ok',
    );
  } catch (err) {
    banner((err as Error).message);
  }
}

ui.loadBtn.addEventListener('click', () => void doLoad());
ui.commitBtn.addEventListener('click', () => void doCommit());
ui.overlayBtn.addEventListener('click', () => void doOverlay());

ui.deleteBtn.addEventListener('click', () => {
  if (editor.selection) editor.deleteSpot(editor.selection);
  canvas.setOverlay(null);
  refreshControls();
});

ui.renameBtn.addEventListener('click', () => {
  if (!editor.selection) return;
  const result = editor.renameSpot(editor.selection, ui.renameInput.value);
  if (!result.ok) banner(result.reason ?? 'rename rejected');
  else banner('', 'ok');
  refreshControls();
  canvas.render();
});

ui.frameInput.addEventListener('change', async () => {
  const file = ui.frameInput.files?.[0];
  if (!file) return;
  try {
    const dims = await api.putLatestFrame(ui.cameraId.value, file);
    referenceFrame = file;
    if (editor.spots.length === 0 && editor.lastCommittedVersion === 0) {
      editor = new EditorState(ui.cameraId.value, dims.width, dims.height);
      canvas.setEditor(editor);
    }
    await canvas.setFrame(referenceFrame);
    banner(`reference frame stored (${dims.width}x${dims.height})`, 'ok');
    refreshControls();
  } catch (err) {
    banner((err as Error).message);
  }
});

window.addEventListener('keydown', (e) => {
  if (e.key === 'Escape') {
    editor.cancelPending();
    canvas.render();
  }
});

refreshControls();
