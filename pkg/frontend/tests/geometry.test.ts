import { describe, expect, it } from 'vitest';

import {
  centroid,
  clampToFrame,
  isSimpleQuad,
  polygonArea,
  quadIssues,
  withinFrame,
} from '../src/geometry.js';
import type { Point } from '../src/types.js';

const square: Point[] = [[0, 0], [10, 0], [10, 10], [0, 10]];
const bowtie: Point[] = [[0, 0], [10, 10], [10, 0], [0, 6]];

describe('polygonArea', () => {
  it('is positive for clockwise image-space order', () => {
    expect(polygonArea(square)).toBe(100);
    expect(polygonArea([...square].reverse())).toBe(-100);
  });
});

describe('isSimpleQuad', () => {
  it('accepts convex and concave simple quads', () => {
    expect(isSimpleQuad(square)).toBe(true);
    expect(isSimpleQuad([[0, 0], [10, 0], [4, 4], [0, 10]])).toBe(true);
  });

  it('rejects the bow-tie', () => {
    expect(isSimpleQuad(bowtie)).toBe(false);
  });
});

describe('clampToFrame', () => {
  it('rounds to integer pixels', () => {
    expect(clampToFrame([3.4, 7.6], 100, 100)).toEqual([3, 8]);
  });

  it('clamps outside points to the edge', () => {
    expect(clampToFrame([-5, 10], 100, 80)).toEqual([0, 10]);
    expect(clampToFrame([130, 90], 100, 80)).toEqual([100, 80]);
  });
});

describe('quadIssues', () => {
  it('is empty for a valid in-frame quad', () => {
    expect(quadIssues(square, 20, 20)).toEqual([]);
  });

  it('flags self-intersection', () => {
    expect(quadIssues(bowtie, 20, 20)).toContain('self-intersecting');
  });

  it('flags zero area', () => {
    expect(quadIssues([[0, 0], [5, 0], [10, 0], [2, 0]], 20, 20)).toContain('zero area');
  });

  it('flags out-of-frame points', () => {
    expect(quadIssues([[-5, 10], [10, 10], [10, 20], [-5, 20]], 100, 100)).toContain(
      'outside the frame',
    );
  });

  it('flags wrong point counts', () => {
    expect(quadIssues([[0, 0], [1, 0], [1, 1]], 10, 10)[0]).toMatch(/4 points/);
  });
});

describe('helpers', () => {
  it('withinFrame is corner-inclusive', () => {
    expect(withinFrame([[0, 0], [100, 0], [100, 80], [0, 80]], 100, 80)).toBe(true);
    expect(withinFrame([[0, 0], [101, 0], [100, 80], [0, 80]], 100, 80)).toBe(false);
  });

  it('centroid averages the corners', () => {
    expect(centroid(square)).toEqual([5, 5]);
  });
});
