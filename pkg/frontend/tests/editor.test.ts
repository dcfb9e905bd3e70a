import { describe, expect, it } from 'vitest';

import { EditorState } from '../src/editor.js';
import type { Point, SpotMapData } from '../src/types.js';

function drawQuad(editor: EditorState, origin: Point, size = 20): string {
  const [x, y] = origin;
  editor.addPoint([x, y]);
  editor.addPoint([x + size, y]);
  editor.addPoint([x + size, y + size]);
  const spot = editor.addPoint([x, y + size]);
  if (!spot) throw new Error('expected a completed quad');
  return spot.spotId;
}

describe('drawing', () => {
  it('completes a quadrilateral on the fourth click with a generated id', () => {
    const editor = new EditorState('cam', 200, 200);
    expect(editor.addPoint([10, 10])).toBeNull();
    expect(editor.addPoint([40, 10])).toBeNull();
    expect(editor.addPoint([40, 40])).toBeNull();
    const spot = editor.addPoint([10, 40]);
    expect(spot?.spotId).toBe('S1');
    expect(spot?.points).toEqual([[10, 10], [40, 10], [40, 40], [10, 40]]);
    expect(editor.pendingPoints).toHaveLength(0);
    expect(editor.selection).toBe('S1');
  });

  it('stores integer pixel coordinates regardless of pointer precision', () => {
    const editor = new EditorState('cam', 200, 200);
    editor.addPoint([10.4, 10.6]);
    editor.addPoint([40.49, 9.51]);
    editor.addPoint([39.7, 40.2]);
    const spot = editor.addPoint([9.9, 39.9]);
    for (const [x, y] of spot!.points) {
      expect(Number.isInteger(x)).toBe(true);
      expect(Number.isInteger(y)).toBe(true);
    }
  });

  it('generated ids skip taken names', () => {
    const editor = new EditorState('cam', 200, 200);
    drawQuad(editor, [10, 10]);
    editor.renameSpot('S1', 'S2');
    const second = drawQuad(editor, [60, 10]);
    expect(second).toBe('S3'); // S2 is taken by the rename
  });

  it('escape cancels a partial polygon', () => {
    const editor = new EditorState('cam', 200, 200);
    editor.addPoint([10, 10]);
    editor.addPoint([20, 10]);
    editor.cancelPending();
    expect(editor.pendingPoints).toHaveLength(0);
    expect(editor.spots).toHaveLength(0);
  });
});

describe('vertex dragging', () => {
  it('moves the vertex to integer coordinates', () => {
    const editor = new EditorState('cam', 200, 200);
    const id = drawQuad(editor, [10, 10]);
    const result = editor.dragVertex(id, 2, [55.2, 61.7]);
    expect(result.snapped).toBe(false);
    expect(editor.spots[0].points[2]).toEqual([55, 62]);
  });

  it('snaps out-of-frame drags to the edge and reports it', () => {
    const editor = new EditorState('cam', 100, 100);
    const id = drawQuad(editor, [10, 10]);
    const result = editor.dragVertex(id, 1, [140, -20]);
    expect(result.snapped).toBe(true);
    expect(editor.spots[0].points[1]).toEqual([100, 0]);
  });
});

describe('ids and deletion', () => {
  it('rejects duplicate ids inline without applying', () => {
    const editor = new EditorState('cam', 200, 200);
    drawQuad(editor, [10, 10]);
    drawQuad(editor, [60, 10]);
    const result = editor.renameSpot('S2', 'S1');
    expect(result.ok).toBe(false);
    expect(result.reason).toMatch(/duplicate/);
    expect(editor.spots.map((s) => s.spotId)).toEqual(['S1', 'S2']);
  });

  it('rejects empty ids', () => {
    const editor = new EditorState('cam', 200, 200);
    drawQuad(editor, [10, 10]);
    expect(editor.renameSpot('S1', '   ').ok).toBe(false);
  });

  it('renaming to itself is allowed', () => {
    const editor = new EditorState('cam', 200, 200);
    drawQuad(editor, [10, 10]);
    expect(editor.renameSpot('S1', 'S1').ok).toBe(true);
  });

  it('delete removes the spot and clears selection', () => {
    const editor = new EditorState('cam', 200, 200);
    const id = drawQuad(editor, [10, 10]);
    editor.select(id);
    expect(editor.deleteSpot(id)).toBe(true);
    expect(editor.spots).toHaveLength(0);
    expect(editor.selection).toBeNull();
  });
});

describe('validation and commit gating', () => {
  it('commit is enabled iff the working map satisfies the invariants', () => {
    const editor = new EditorState('cam', 200, 200);
    expect(editor.commitEnabled).toBe(true); // empty map is valid
    const id = drawQuad(editor, [10, 10]);
    expect(editor.commitEnabled).toBe(true);
    // swap the two bottom corners: edges (1-2) and (3-0) now cross
    editor.dragVertex(id, 2, [8, 31]);
    editor.dragVertex(id, 3, [32, 32]);
    expect(editor.commitEnabled).toBe(false);
    expect(editor.validationIssues().get(id)).toContain('self-intersecting');
  });

  it('flags duplicate ids at the map level', () => {
    const editor = new EditorState('cam', 200, 200);
    drawQuad(editor, [10, 10]);
    drawQuad(editor, [60, 10]);
    // force a duplicate through the server-load path
    editor.spots[1].spotId = 'S1';
    expect(editor.commitEnabled).toBe(false);
    const issues = editor.validationIssues();
    expect([...issues.values()].flat()).toContain('duplicate spot id');
  });
});

describe('dirty tracking and server state', () => {
  const serverDoc: SpotMapData = {
    camera_id: 'cam',
    width: 200,
    height: 200,
    version: 3,
    spots: [
      { spot_id: 'A', kind: 'quadrilateral', points: [[1, 1], [20, 1], [20, 20], [1, 20]] },
    ],
  };

  it('loading a server document leaves the editor clean', () => {
    const editor = new EditorState('cam', 200, 200);
    editor.applyServer(serverDoc);
    expect(editor.dirty).toBe(false);
    expect(editor.lastCommittedVersion).toBe(3);
    expect(editor.spots[0].spotId).toBe('A');
  });

  it('dirty is true iff the working copy differs from last committed', () => {
    const editor = new EditorState('cam', 200, 200);
    editor.applyServer(serverDoc);
    editor.dragVertex('A', 0, [2, 1]);
    expect(editor.dirty).toBe(true);
    editor.dragVertex('A', 0, [1, 1]); // drag back: identical again
    expect(editor.dirty).toBe(false);
  });

  it('toDocument round-trips through applyServer coordinate-exactly', () => {
    const editor = new EditorState('cam', 200, 200);
    drawQuad(editor, [10, 10]);
    drawQuad(editor, [50, 50], 30);
    const doc = editor.toDocument();
    const editor2 = new EditorState('cam', doc.width, doc.height);
    editor2.applyServer({ ...doc, version: 1 });
    expect(editor2.toDocument().spots).toEqual(doc.spots);
    expect(editor2.dirty).toBe(false);
  });

  it('the working document carries the base version for optimistic commits', () => {
    const editor = new EditorState('cam', 200, 200);
    editor.applyServer(serverDoc);
    drawQuad(editor, [60, 60]);
    expect(editor.toDocument().version).toBe(3);
  });
});
