/**
 * Annotator round-trip against a live monitoring service: draw five
 * quadrilaterals, commit, reload, and compare coordinate-exactly; an invalid
 * polygon must block the commit. The service is spawned from the Python
 * package in this repo; the suite skips itself when that package is not
 * importable (CI without the backend installed).
 */

import { spawn, spawnSync, type ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient, MapRejectedError } from '../src/api.js';
import { EditorState, commit, loadCamera } from '../src/editor.js';
import type { Point } from '../src/types.js';

const PORT = 8741;
const BASE = `http://127.0.0.1:${PORT}`;

function backendAvailable(): boolean {
  return spawnSync('python3', ['-c', 'import parkwatch'], { timeout: 30_000 }).status === 0;
}

const run = backendAvailable();

function drawQuad(editor: EditorState, origin: Point, w = 40, h = 30): string {
  const [x, y] = origin;
  editor.addPoint([x, y]);
  editor.addPoint([x + w, y + 2]);
  editor.addPoint([x + w + 3, y + h]);
  const spot = editor.addPoint([x - 2, y + h - 1]);
  if (!spot) throw new Error('quad not completed');
  return spot.spotId;
}

describe.skipIf(!run)('annotator against a live service', () => {
  let workdir: string;
  let server: ChildProcess | undefined;
  const api = new ApiClient(BASE);

  beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), 'annotator-it-'));
    const prepScript = [
      'import sys, yaml',
      'from pathlib import Path',
      'from parkwatch.backbones import build_model, default_spec, save_model',
      'work = Path(sys.argv[1])',
      'port = sys.argv[2]',
      'save_model(build_model(default_spec("conv3"), init_seed=0), work / "model")',
      '(work / "svc.yaml").write_text(yaml.safe_dump({',
      '    "framework": {"kind": "single_model", "model_dir": str(work / "model")},',
      '    "store_path": str(work / "store"),',
      '    "listen": f"127.0.0.1:{port}",',
      '}))',
    ].join('\n');
    const prep = spawnSync('python3', ['-c', prepScript, workdir, String(PORT)], {
      encoding: 'utf-8',
    });
    if (prep.status !== 0) {
      throw new Error(`service prep failed: ${prep.stderr}`);
    }

    server = spawn('python3', ['-m', 'parkwatch.cli', 'serve', '--config', join(workdir, 'svc.yaml')], {
      stdio: 'ignore',
    });
    const deadline = Date.now() + 90_000;
    for (;;) {
      try {
        const health = await api.health();
        if (health.status === 'ok') break;
      } catch {
        // not up yet
      }
      if (Date.now() > deadline) throw new Error('service did not come up in 90s');
      await new Promise((r) => setTimeout(r, 500));
    }
  }, 120_000);

  afterAll(() => {
    server?.kill('SIGTERM');
    if (workdir) rmSync(workdir, { recursive: true, force: true });
  });

  it('draw 5, commit, reload: coordinate-exact, version +1', async () => {
    const camera = 'annotator-cam';
    const { editor } = await loadCamera(api, camera, { width: 640, height: 480 });
    expect(editor.lastCommittedVersion).toBe(0); // fresh camera, empty map
    expect(editor.spots).toHaveLength(0);

    const origins: Point[] = [[20, 20], [120, 20], [220, 20], [20, 120], [120, 120]];
    for (const origin of origins) drawQuad(editor, origin);
    expect(editor.spots).toHaveLength(5);
    expect(editor.dirty).toBe(true);
    expect(editor.commitEnabled).toBe(true);

    const before = editor.toDocument().spots;
    const version = await commit(api, editor);
    expect(version).toBe(editor.lastCommittedVersion);
    expect(version).toBe(1); // increment of exactly 1 from the empty state
    expect(editor.dirty).toBe(false);

    const reloaded = await loadCamera(api, camera);
    expect(reloaded.editor.lastCommittedVersion).toBe(1);
    expect(reloaded.editor.toDocument().spots).toEqual(before); // integer-exact

    // a second commit after an edit bumps the version by exactly 1 again
    reloaded.editor.dragVertex('S1', 0, [25, 25]);
    expect(await commit(api, reloaded.editor)).toBe(2);
  }, 60_000);

  it('invalid polygon blocks commit locally and server-side', async () => {
    const camera = 'annotator-cam-invalid';
    const { editor } = await loadCamera(api, camera, { width: 640, height: 480 });
    const id = drawQuad(editor, [30, 30]);
    // swap the two bottom corners: the quad folds into a bow-tie
    editor.dragVertex(id, 2, [26, 58]);
    editor.dragVertex(id, 3, [75, 61]);
    expect(editor.commitEnabled).toBe(false);
    await expect(commit(api, editor)).rejects.toThrow(/commit blocked/);

    // the service enforces the same invariant if a client bypasses the gate
    await expect(api.putSpotMap(camera, editor.toDocument())).rejects.toThrow(MapRejectedError);
  }, 60_000);

  it('overlay classifies the committed spots without mutating the map', async () => {
    const camera = 'annotator-cam-overlay';
    const { editor } = await loadCamera(api, camera, { width: 320, height: 240 });
    drawQuad(editor, [40, 40]);
    drawQuad(editor, [150, 40]);
    await commit(api, editor);

    // any decodable frame of the right size works for the smoke check
    const png = spawnSync(
      'python3',
      [
        '-c',
        'import cv2, numpy as np, sys; ok, buf = cv2.imencode(".png", np.full((240,320,3),128,np.uint8)); sys.stdout.buffer.write(buf.tobytes())',
      ],
      { maxBuffer: 10 * 1024 * 1024 },
    );
    const result = await api.classifyFrame(camera, new Uint8Array(png.stdout).buffer);
    expect(result.spots.map((s) => s.spot_id).sort()).toEqual(['S1', 'S2']);
    for (const s of result.spots) {
      expect(['occupied', 'empty']).toContain(s.label);
      expect(s.confidence).toBeGreaterThanOrEqual(0.5);
      expect(s.confidence).toBeLessThanOrEqual(1);
    }
    const mapAfter = await api.getSpotMap(camera);
    expect(mapAfter?.version).toBe(1); // overlay never mutates the map
  }, 60_000);
});
