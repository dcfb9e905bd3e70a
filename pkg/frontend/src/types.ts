/** Wire types matching the monitoring service's JSON schemas exactly. */

export type Point = [number, number];

export type SpotKind = 'rotated_rect' | 'quadrilateral' | 'axis_aligned_box';

export interface SpotData {
  spot_id: string;
  kind: SpotKind;
  points: Point[]; // exactly 4, integer pixels in reference-frame space
  angle?: number;
}

export interface SpotMapData {
  camera_id: string;
  width: number;
  height: number;
  version: number;
  spots: SpotData[];
}

export type OccupancyLabel = 'occupied' | 'empty';

export interface SpotResult {
  spot_id: string;
  label: OccupancyLabel;
  confidence: number;
  framework: string;
}

export interface OccupancyResult {
  camera_id: string;
  frame_id: string;
  spots: SpotResult[];
  latency_ms: number;
  spot_map_version: number;
}
