import type { OccupancyResult, SpotMapData } from './types.js';

export class ServiceError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = 'ServiceError';
  }
}

/** The stored map moved on while we were editing; caller must merge. */
export class VersionConflictError extends ServiceError {
  constructor(message: string) {
    super(message, 409);
    this.name = 'VersionConflictError';
  }
}

/** The service rejected the map (invalid geometry, duplicate ids, ...). */
export class MapRejectedError extends ServiceError {
  constructor(message: string) {
    super(message, 422);
    this.name = 'MapRejectedError';
  }
}

type FetchLike = typeof fetch;

async function detail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === 'string') return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText || `HTTP ${response.status}`;
  }
}

/** Thin client over the monitoring service's HTTP+JSON API. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
  }

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<{ status: string; framework: string; backbone: string }> {
    const r = await this.fetchImpl(this.url('/healthz'));
    if (!r.ok) throw new ServiceError(await detail(r), r.status);
    return r.json();
  }

  /** Latest committed map, or null when the camera has none yet. */
  async getSpotMap(cameraId: string): Promise<SpotMapData | null> {
    const r = await this.fetchImpl(this.url(`/cameras/${encodeURIComponent(cameraId)}/spotmap`));
    if (r.status === 404) return null;
    if (!r.ok) throw new ServiceError(await detail(r), r.status);
    return r.json();
  }

  /**
   * Commit a map. doc.version must be the version the edits are based on
   * (0 for a fresh camera); the committed version comes back.
   */
  async putSpotMap(cameraId: string, doc: SpotMapData): Promise<number> {
    const r = await this.fetchImpl(this.url(`/cameras/${encodeURIComponent(cameraId)}/spotmap`), {
      method: 'PUT',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(doc),
    });
    if (r.status === 409) throw new VersionConflictError(await detail(r));
    if (r.status === 422) throw new MapRejectedError(await detail(r));
    if (!r.ok) throw new ServiceError(await detail(r), r.status);
    const body = (await r.json()) as { version: number };
    return body.version;
  }

  /** Reference image for the canvas, or null when none was stored yet. */
  async getLatestFrame(cameraId: string): Promise<Blob | null> {
    const r = await this.fetchImpl(
      this.url(`/cameras/${encodeURIComponent(cameraId)}/frames/latest`),
    );
    if (r.status === 404) return null;
    if (!r.ok) throw new ServiceError(await detail(r), r.status);
    return r.blob();
  }

  async putLatestFrame(
    cameraId: string,
    image: Blob | ArrayBuffer,
  ): Promise<{ width: number; height: number }> {
    const r = await this.fetchImpl(
      this.url(`/cameras/${encodeURIComponent(cameraId)}/frames/latest`),
      { method: 'PUT', body: image },
    );
    if (!r.ok) throw new ServiceError(await detail(r), r.status);
    return r.json();
  }

  /** Classify a frame against the committed map (never mutates it). */
  async classifyFrame(cameraId: string, image: Blob | ArrayBuffer): Promise<OccupancyResult> {
    const r = await this.fetchImpl(this.url(`/cameras/${encodeURIComponent(cameraId)}/frames`), {
      method: 'POST',
      body: image,
    });
    if (!r.ok) throw new ServiceError(await detail(r), r.status);
    return r.json();
  }
}
