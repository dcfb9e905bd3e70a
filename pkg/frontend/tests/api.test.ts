import { describe, expect, it, vi } from 'vitest';

import {
  ApiClient,
  MapRejectedError,
  ServiceError,
  VersionConflictError,
} from '../src/api.js';
import type { SpotMapData } from '../src/types.js';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

const doc: SpotMapData = {
  camera_id: 'cam1',
  width: 100,
  height: 80,
  version: 0,
  spots: [{ spot_id: 'S1', kind: 'quadrilateral', points: [[1, 1], [9, 1], [9, 9], [1, 9]] }],
};

describe('ApiClient', () => {
  it('getSpotMap returns null on 404', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ detail: 'nope' }, 404));
    const api = new ApiClient('http://svc', fetchMock as unknown as typeof fetch);
    expect(await api.getSpotMap('cam1')).toBeNull();
    expect(fetchMock).toHaveBeenCalledWith('http://svc/cameras/cam1/spotmap');
  });

  it('putSpotMap sends the document and returns the committed version', async () => {
    const fetchMock = vi.fn(async (_url: string, init?: RequestInit) => {
      const sent = JSON.parse(init?.body as string) as SpotMapData;
      expect(sent.version).toBe(0);
      expect(sent.spots[0].points).toEqual([[1, 1], [9, 1], [9, 9], [1, 9]]);
      return jsonResponse({ camera_id: 'cam1', version: 1 });
    });
    const api = new ApiClient('http://svc/', fetchMock as unknown as typeof fetch);
    expect(await api.putSpotMap('cam1', doc)).toBe(1);
  });

  it('maps 409 to VersionConflictError with the server detail', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ detail: 'stored version is 4' }, 409));
    const api = new ApiClient('http://svc', fetchMock as unknown as typeof fetch);
    await expect(api.putSpotMap('cam1', doc)).rejects.toThrow(VersionConflictError);
    await expect(api.putSpotMap('cam1', doc)).rejects.toThrow(/stored version is 4/);
  });

  it('maps 422 to MapRejectedError', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ detail: "invalid spots: ['S9']" }, 422));
    const api = new ApiClient('http://svc', fetchMock as unknown as typeof fetch);
    await expect(api.putSpotMap('cam1', doc)).rejects.toThrow(MapRejectedError);
  });

  it('classifyFrame posts the binary body', async () => {
    const fetchMock = vi.fn(async (_url: string, init?: RequestInit) => {
      expect(init?.method).toBe('POST');
      expect(init?.body).toBeInstanceOf(ArrayBuffer);
      return jsonResponse({
        camera_id: 'cam1',
        frame_id: 'abc',
        spots: [],
        latency_ms: 1.5,
        spot_map_version: 2,
      });
    });
    const api = new ApiClient('http://svc', fetchMock as unknown as typeof fetch);
    const result = await api.classifyFrame('cam1', new ArrayBuffer(8));
    expect(result.spot_map_version).toBe(2);
  });

  it('wraps other failures in ServiceError with status', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ detail: 'boom' }, 500));
    const api = new ApiClient('http://svc', fetchMock as unknown as typeof fetch);
    const err = await api.health().catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).status).toBe(500);
  });

  it('camera ids are URL-encoded', async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ detail: 'x' }, 404));
    const api = new ApiClient('http://svc', fetchMock as unknown as typeof fetch);
    await api.getSpotMap('lot/7 north');
    expect(fetchMock).toHaveBeenCalledWith('http://svc/cameras/lot%2F7%20north/spotmap');
  });
});
