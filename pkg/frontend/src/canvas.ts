import type { EditorState } from './editor.js';
import type { OccupancyResult, Point } from './types.js';

const SPOT_STROKE = '#ffd60a';
const SELECTED_STROKE = '#ff453a';
const PENDING_FILL = '#0a84ff';
const OCCUPIED = 'rgba(255, 69, 58, 0.35)';
const EMPTY = 'rgba(48, 209, 88, 0.35)';

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/**
 * Canvas rendering plus pointer handling. Zoom and pan are view-only: every
 * coordinate handed to the editor is already converted back into
 * reference-frame pixel space.
 */
export class AnnotatorCanvas {
  private readonly ctx: CanvasRenderingContext2D;
  private image: ImageBitmap | HTMLImageElement | null = null;
  private overlay: OccupancyResult | null = null;
  view: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
  private dragging: { spotId: string; vertex: number } | null = null;
  private panning: { startX: number; startY: number } | null = null;
  onChange: () => void = () => {};
  onWarning: (message: string) => void = () => {};

  constructor(
    readonly canvas: HTMLCanvasElement,
    private editor: EditorState,
  ) {
    const ctx = canvas.getContext('2d');
    if (!ctx) throw new Error('2d canvas unsupported');
    this.ctx = ctx;
    canvas.addEventListener('pointerdown', (e) => this.pointerDown(e));
    canvas.addEventListener('pointermove', (e) => this.pointerMove(e));
    canvas.addEventListener('pointerup', () => this.pointerUp());
    canvas.addEventListener('wheel', (e) => this.wheel(e), { passive: false });
  }

  setEditor(editor: EditorState): void {
    this.editor = editor;
    this.overlay = null;
    this.fitView();
  }

  async setFrame(blob: Blob | null): Promise<void> {
    this.image = blob ? await createImageBitmap(blob) : null;
    this.fitView();
  }

  setOverlay(result: OccupancyResult | null): void {
    this.overlay = result;
    this.render();
  }

  fitView(): void {
    const scale = Math.min(
      this.canvas.width / this.editor.width,
      this.canvas.height / this.editor.height,
    );
    this.view = { scale, offsetX: 0, offsetY: 0 };
    this.render();
  }

  toImage(e: { offsetX: number; offsetY: number }): Point {
    return [
      (e.offsetX - this.view.offsetX) / this.view.scale,
      (e.offsetY - this.view.offsetY) / this.view.scale,
    ];
  }

  private hitVertex(p: Point): { spotId: string; vertex: number } | null {
    const tolerance = 8 / this.view.scale;
    for (const spot of this.editor.spots) {
      for (let i = 0; i < spot.points.length; i++) {
        const [x, y] = spot.points[i];
        if (Math.hypot(x - p[0], y - p[1]) <= tolerance) {
          return { spotId: spot.spotId, vertex: i };
        }
      }
    }
    return null;
  }

  private pointerDown(e: PointerEvent): void {
    if (e.button === 1 || e.button === 2 || e.shiftKey) {
      this.panning = { startX: e.offsetX, startY: e.offsetY };
      return;
    }
    const p = this.toImage(e);
    const hit = this.hitVertex(p);
    if (hit) {
      this.dragging = hit;
      this.editor.select(hit.spotId);
    } else {
      this.editor.addPoint(p);
    }
    this.onChange();
    this.render();
  }

  private pointerMove(e: PointerEvent): void {
    if (this.panning) {
      this.view.offsetX += e.offsetX - this.panning.startX;
      this.view.offsetY += e.offsetY - this.panning.startY;
      this.panning = { startX: e.offsetX, startY: e.offsetY };
      this.render();
      return;
    }
    if (!this.dragging) return;
    const { snapped } = this.editor.dragVertex(
      this.dragging.spotId,
      this.dragging.vertex,
      this.toImage(e),
    );
    if (snapped) this.onWarning('vertex snapped to the frame edge');
    this.onChange();
    this.render();
  }

  private pointerUp(): void {
    this.dragging = null;
    this.panning = null;
  }

  private wheel(e: WheelEvent): void {
    e.preventDefault();
    const factor = e.deltaY < 0 ? 1.1 : 1 / 1.1;
    const before = this.toImage(e);
    this.view.scale *= factor;
    // keep the point under the cursor fixed while zooming
    this.view.offsetX = e.offsetX - before[0] * this.view.scale;
    this.view.offsetY = e.offsetY - before[1] * this.view.scale;
    this.render();
  }

  render(): void {
    const { ctx } = this;
    ctx.setTransform(1, 0, 0, 1, 0, 0);
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.setTransform(
      this.view.scale, 0, 0, this.view.scale,
      this.view.offsetX, this.view.offsetY,
    );
    if (this.image) ctx.drawImage(this.image, 0, 0);
    else {
      ctx.fillStyle = '#1c1c1e';
      ctx.fillRect(0, 0, this.editor.width, this.editor.height);
    }

    const labels = new Map(this.overlay?.spots.map((s) => [s.spot_id, s]) ?? []);
    const issues = this.editor.validationIssues();
    for (const spot of this.editor.spots) {
      ctx.beginPath();
      spot.points.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
      ctx.closePath();
      const result = labels.get(spot.spotId);
      if (result) {
        ctx.fillStyle = result.label === 'occupied' ? OCCUPIED : EMPTY;
        ctx.fill();
      }
      const invalid = issues.has(spot.spotId);
      ctx.lineWidth = 2 / this.view.scale;
      ctx.strokeStyle = invalid
        ? '#ff375f'
        : spot.spotId === this.editor.selection
          ? SELECTED_STROKE
          : SPOT_STROKE;
      ctx.stroke();
      const [cx, cy] = spot.points[0];
      ctx.fillStyle = ctx.strokeStyle;
      ctx.font = `${12 / this.view.scale}px system-ui`;
      const caption = result
        ? `${spot.spotId} ${result.label} ${(result.confidence * 100).toFixed(0)}%`
        : spot.spotId;
      ctx.fillText(caption, cx + 3 / this.view.scale, cy - 4 / this.view.scale);
      for (const [x, y] of spot.points) {
        ctx.beginPath();
        ctx.arc(x, y, 3.5 / this.view.scale, 0, Math.PI * 2);
        ctx.fill();
      }
    }

    ctx.fillStyle = PENDING_FILL;
    for (const [x, y] of this.editor.pendingPoints) {
      ctx.beginPath();
      ctx.arc(x, y, 4 / this.view.scale, 0, Math.PI * 2);
      ctx.fill();
    }
  }
}
