import { ApiClient } from './api.js';
import { clampToFrame, quadIssues } from './geometry.js';
import type { OccupancyResult, Point, SpotData, SpotMapData } from './types.js';

export interface WorkingSpot {
  spotId: string;
  kind: SpotData['kind'];
  points: Point[]; // 4 integer-pixel corners once complete
  angle?: number;
}

export interface DragResult {
  snapped: boolean; // true when the vertex was pulled back to the frame edge
}

function spotsEqual(a: SpotData[], b: SpotData[]): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    const s = a[i];
    const t = b[i];
    if (s.spot_id !== t.spot_id || s.kind !== t.kind) return false;
    if (s.points.length !== t.points.length) return false;
    for (let j = 0; j < s.points.length; j++) {
      if (s.points[j][0] !== t.points[j][0] || s.points[j][1] !== t.points[j][1]) return false;
    }
  }
  return true;
}

/**
 * The annotator's working state for one camera: a client copy of the spot
 * map plus the in-progress polygon. Coordinates always live in
 * reference-frame pixel space as integers; any zoom/pan is the canvas
 * layer's business.
 */
export class EditorState {
  readonly cameraId: string;
  readonly width: number;
  readonly height: number;
  spots: WorkingSpot[] = [];
  pendingPoints: Point[] = [];
  selection: string | null = null;
  lastCommittedVersion = 0;
  private lastCommitted: SpotData[] = [];
  private idCounter = 0;

  constructor(cameraId: string, width: number, height: number) {
    this.cameraId = cameraId;
    this.width = width;
    this.height = height;
  }

  /** Replace the working copy with a server document (load / post-commit). */
  applyServer(doc: SpotMapData): void {
    this.spots = doc.spots.map((s) => ({
      spotId: s.spot_id,
      kind: s.kind,
      points: s.points.map((p) => [p[0], p[1]] as Point),
      angle: s.angle,
    }));
    this.lastCommitted = doc.spots.map((s) => ({
      ...s,
      points: s.points.map((p) => [p[0], p[1]] as Point),
    }));
    this.lastCommittedVersion = doc.version;
    this.pendingPoints = [];
    this.selection = null;
    this.idCounter = this.spots.length;
  }

  /** True iff the working copy differs from the last committed state. */
  get dirty(): boolean {
    return !spotsEqual(this.workingSpotData(), this.lastCommitted);
  }

  private workingSpotData(): SpotData[] {
    return this.spots.map((s) => ({
      spot_id: s.spotId,
      kind: s.kind,
      points: s.points.map((p) => [p[0], p[1]] as Point),
      ...(s.angle !== undefined ? { angle: s.angle } : {}),
    }));
  }

  nextSpotId(): string {
    let id: string;
    do {
      this.idCounter += 1;
      id = `S${this.idCounter}`;
    } while (this.spots.some((s) => s.spotId === id));
    return id;
  }

  /**
   * One draw click. Points clamp to the frame; the fourth click completes a
   * quadrilateral with a generated id and returns it.
   */
  addPoint(p: Point): WorkingSpot | null {
    this.pendingPoints.push(clampToFrame(p, this.width, this.height));
    if (this.pendingPoints.length < 4) return null;
    const spot: WorkingSpot = {
      spotId: this.nextSpotId(),
      kind: 'quadrilateral',
      points: this.pendingPoints.splice(0, 4),
    };
    this.spots.push(spot);
    this.selection = spot.spotId;
    return spot;
  }

  cancelPending(): void {
    this.pendingPoints = [];
  }

  /** Drag one vertex; out-of-frame positions snap to the edge. */
  dragVertex(spotId: string, vertexIndex: number, p: Point): DragResult {
    const spot = this.spots.find((s) => s.spotId === spotId);
    if (!spot || vertexIndex < 0 || vertexIndex > 3) {
      throw new Error(`no such vertex: ${spotId}[${vertexIndex}]`);
    }
    const clamped = clampToFrame(p, this.width, this.height);
    const snapped = clamped[0] !== Math.round(p[0]) || clamped[1] !== Math.round(p[1]);
    spot.points[vertexIndex] = clamped;
    return { snapped };
  }

  deleteSpot(spotId: string): boolean {
    const before = this.spots.length;
    this.spots = this.spots.filter((s) => s.spotId !== spotId);
    if (this.selection === spotId) this.selection = null;
    return this.spots.length < before;
  }

  /** Inline rename; duplicates and empty ids are rejected, not applied. */
  renameSpot(spotId: string, newId: string): { ok: boolean; reason?: string } {
    const trimmed = newId.trim();
    if (!trimmed) return { ok: false, reason: 'spot id must not be empty' };
    if (trimmed !== spotId && this.spots.some((s) => s.spotId === trimmed)) {
      return { ok: false, reason: `duplicate spot id ${trimmed}` };
    }
    const spot = this.spots.find((s) => s.spotId === spotId);
    if (!spot) return { ok: false, reason: `no such spot ${spotId}` };
    spot.spotId = trimmed;
    if (this.selection === spotId) this.selection = trimmed;
    return { ok: true };
  }

  select(spotId: string | null): void {
    this.selection = spotId;
  }

  /** Per-spot validation problems; empty map means the map is committable. */
  validationIssues(): Map<string, string[]> {
    const issues = new Map<string, string[]>();
    const seen = new Set<string>();
    for (const spot of this.spots) {
      const problems = quadIssues(spot.points, this.width, this.height);
      if (seen.has(spot.spotId)) problems.push('duplicate spot id');
      seen.add(spot.spotId);
      if (problems.length) issues.set(spot.spotId, problems);
    }
    return issues;
  }

  /** Commit is enabled iff the working map satisfies every invariant. */
  get commitEnabled(): boolean {
    return this.validationIssues().size === 0;
  }

  /** The working map as the service document, based on the given version. */
  toDocument(): SpotMapData {
    return {
      camera_id: this.cameraId,
      width: this.width,
      height: this.height,
      version: this.lastCommittedVersion,
      spots: this.workingSpotData(),
    };
  }
}

/**
 * Fetch the latest reference frame and spot map for a camera. A camera with
 * no committed map yields an empty editor in draw mode; the frame may be
 * null when nothing was uploaded yet (caller asks the operator for one).
 */
export async function loadCamera(
  api: ApiClient,
  cameraId: string,
  fallbackSize: { width: number; height: number } = { width: 1280, height: 720 },
): Promise<{ editor: EditorState; frame: Blob | null }> {
  const [doc, frame] = await Promise.all([
    api.getSpotMap(cameraId),
    api.getLatestFrame(cameraId),
  ]);
  const width = doc?.width ?? fallbackSize.width;
  const height = doc?.height ?? fallbackSize.height;
  const editor = new EditorState(cameraId, width, height);
  if (doc) editor.applyServer(doc);
  return { editor, frame };
}

/**
 * Commit the working map. On success the editor records the new version and
 * becomes clean. Version conflicts and rejections propagate to the caller
 * (merge prompt / inline highlight).
 */
export async function commit(api: ApiClient, editor: EditorState): Promise<number> {
  if (!editor.commitEnabled) {
    const bad = [...editor.validationIssues().keys()].join(', ');
    throw new Error(`commit blocked by invalid spots: ${bad}`);
  }
  const version = await api.putSpotMap(editor.cameraId, editor.toDocument());
  editor.applyServer({ ...editor.toDocument(), version });
  return version;
}

/**
 * Classify a frame against the committed map and return the per-spot labels
 * for painting. Read-only with respect to the map.
 */
export async function overlayPredictions(
  api: ApiClient,
  editor: EditorState,
  frame: Blob | ArrayBuffer,
): Promise<OccupancyResult> {
  if (editor.lastCommittedVersion < 1) {
    throw new Error('overlay needs at least one committed spot map');
  }
  return api.classifyFrame(editor.cameraId, frame);
}
