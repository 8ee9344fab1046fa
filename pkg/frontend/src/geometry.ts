// Angle helpers for the unit-circle arena. Everything stays in radians.

export const TWO_PI = 2 * Math.PI;

export function normalizeAngle(angle: number): number {
  const wrapped = angle % TWO_PI;
  return wrapped < 0 ? wrapped + TWO_PI : wrapped;
}

/** Shortest angular separation between two angles, in [0, pi]. */
export function angularDistance(a: number, b: number): number {
  const diff = Math.abs(a - b) % TWO_PI;
  return Math.min(diff, TWO_PI - diff);
}

/**
 * Nearest circle angle to a click. The canvas y axis points down, so dy
 * is flipped before atan2; a click exactly at the center maps to angle 0.
 */
export function projectToAngle(
  x: number,
  y: number,
  centerX: number,
  centerY: number,
): number {
  return normalizeAngle(Math.atan2(centerY - y, x - centerX));
}

export function withinStep(current: number, target: number, maxStep: number): boolean {
  return angularDistance(current, target) <= maxStep;
}

/** Canvas coordinates of a point given in arena units. */
export function toCanvas(
  pointX: number,
  pointY: number,
  centerX: number,
  centerY: number,
  radius: number,
): [number, number] {
  return [centerX + radius * pointX, centerY - radius * pointY];
}

export function angleToCanvas(
  angle: number,
  centerX: number,
  centerY: number,
  radius: number,
): [number, number] {
  return toCanvas(Math.cos(angle), Math.sin(angle), centerX, centerY, radius);
}
