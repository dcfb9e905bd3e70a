import type { Point } from './types.js';

/** Signed shoelace area; positive for clockwise order in image coordinates. */
export function polygonArea(points: Point[]): number {
  let acc = 0;
  for (let i = 0; i < points.length; i++) {
    const [x0, y0] = points[i];
    const [x1, y1] = points[(i + 1) % points.length];
    acc += x0 * y1 - x1 * y0;
  }
  return acc / 2;
}

function orient(a: Point, b: Point, c: Point): number {
  return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

function properlyIntersect(p1: Point, p2: Point, q1: Point, q2: Point): boolean {
  const d1 = orient(q1, q2, p1);
  const d2 = orient(q1, q2, p2);
  const d3 = orient(p1, p2, q1);
  const d4 = orient(p1, p2, q2);
  if (d1 === 0 || d2 === 0 || d3 === 0 || d4 === 0) return false;
  return d1 > 0 !== d2 > 0 && d3 > 0 !== d4 > 0;
}

/** A quad is simple unless its opposite edges cross (the bow-tie case). */
export function isSimpleQuad(points: Point[]): boolean {
  if (points.length !== 4) return false;
  const [a, b, c, d] = points;
  return !(properlyIntersect(a, b, c, d) || properlyIntersect(b, c, d, a));
}

/** Clamp to the reference frame and round to integer pixels. */
export function clampToFrame(p: Point, width: number, height: number): Point {
  return [
    Math.min(Math.max(Math.round(p[0]), 0), width),
    Math.min(Math.max(Math.round(p[1]), 0), height),
  ];
}

export function withinFrame(points: Point[], width: number, height: number): boolean {
  return points.every(([x, y]) => x >= 0 && y >= 0 && x <= width && y <= height);
}

/** All reasons a spot polygon would be rejected by the service. */
export function quadIssues(points: Point[], width: number, height: number): string[] {
  const issues: string[] = [];
  if (points.length !== 4) {
    issues.push(`needs exactly 4 points, has ${points.length}`);
    return issues;
  }
  if (!withinFrame(points, width, height)) issues.push('outside the frame');
  if (Math.abs(polygonArea(points)) === 0) issues.push('zero area');
  else if (!isSimpleQuad(points)) issues.push('self-intersecting');
  return issues;
}

export function centroid(points: Point[]): Point {
  const sx = points.reduce((s, p) => s + p[0], 0);
  const sy = points.reduce((s, p) => s + p[1], 0);
  return [sx / points.length, sy / points.length];
}
