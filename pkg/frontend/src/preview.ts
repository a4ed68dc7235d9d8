// Deterministic SVG preview of a use case model: stick-figure actors in a
// left column (model order), use-case ellipses inside the labeled boundary
// rectangle, straight association lines, dashed labeled include/extend
// arrows. Pure function of the model JSON; an invalid model throws before
// anything is drawn.

import type { ModelJson } from './types.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

const ACTOR_X = 70;
const BOUNDARY_X = 190;
const BOUNDARY_TOP = 30;
const USECASE_CX = 340;
const USECASE_RX = 95;
const USECASE_RY = 24;
const ROW_HEIGHT = 78;
const FIRST_ROW_Y = 100;

export class PreviewError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'PreviewError';
  }
}

function svgNode<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number> = {},
  parent?: SVGElement,
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  parent?.appendChild(node);
  return node;
}

function checkModel(model: ModelJson): void {
  if (!model.system_name || !model.system_name.trim()) {
    throw new PreviewError('model has no system name');
  }
  const actorIds = new Set(model.actors.map((a) => a.id));
  const usecaseIds = new Set(model.use_cases.map((u) => u.id));
  if (actorIds.size !== model.actors.length) {
    throw new PreviewError('duplicate actor ids');
  }
  if (usecaseIds.size !== model.use_cases.length) {
    throw new PreviewError('duplicate use case ids');
  }
  for (const edge of model.associations) {
    if (!actorIds.has(edge.actor_id) || !usecaseIds.has(edge.usecase_id)) {
      throw new PreviewError(
        `association ${edge.actor_id} -> ${edge.usecase_id} references a missing element`,
      );
    }
  }
  for (const rel of model.relations) {
    if (!usecaseIds.has(rel.from_id) || !usecaseIds.has(rel.to_id)) {
      throw new PreviewError(`relation ${rel.from_id} -> ${rel.to_id} references a missing element`);
    }
  }
}

function drawStickFigure(parent: SVGElement, x: number, y: number, name: string): void {
  const group = svgNode('g', { class: 'actor-figure', transform: `translate(${x}, ${y})` }, parent);
  svgNode('circle', { cx: 0, cy: -26, r: 8, fill: 'none', stroke: 'black' }, group);
  svgNode('line', { x1: 0, y1: -18, x2: 0, y2: 4, stroke: 'black' }, group);
  svgNode('line', { x1: -12, y1: -10, x2: 12, y2: -10, stroke: 'black' }, group);
  svgNode('line', { x1: 0, y1: 4, x2: -10, y2: 18, stroke: 'black' }, group);
  svgNode('line', { x1: 0, y1: 4, x2: 10, y2: 18, stroke: 'black' }, group);
  const label = svgNode('text', { x: 0, y: 34, 'text-anchor': 'middle', class: 'actor-label' }, group);
  label.textContent = name;
}

export function drawModelPreview(model: ModelJson): SVGSVGElement {
  checkModel(model);

  const rows = Math.max(model.actors.length, model.use_cases.length, 1);
  const height = FIRST_ROW_Y + rows * ROW_HEIGHT;
  const width = USECASE_CX + USECASE_RX + 60;
  const svg = svgNode('svg', {
    xmlns: SVG_NS,
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    class: 'model-preview',
  });

  svgNode(
    'rect',
    {
      x: BOUNDARY_X,
      y: BOUNDARY_TOP,
      width: width - BOUNDARY_X - 20,
      height: height - BOUNDARY_TOP - 20,
      fill: 'none',
      stroke: 'black',
      class: 'system-boundary',
    },
    svg,
  );
  const title = svgNode(
    'text',
    { x: BOUNDARY_X + 12, y: BOUNDARY_TOP + 22, class: 'system-name' },
    svg,
  );
  title.textContent = model.system_name;

  const actorY = new Map<string, number>();
  model.actors.forEach((actor, index) => {
    const y = FIRST_ROW_Y + index * ROW_HEIGHT;
    actorY.set(actor.id, y);
    drawStickFigure(svg, ACTOR_X, y, actor.name);
  });

  const usecaseY = new Map<string, number>();
  model.use_cases.forEach((usecase, index) => {
    const y = FIRST_ROW_Y + index * ROW_HEIGHT;
    usecaseY.set(usecase.id, y);
    svgNode(
      'ellipse',
      {
        cx: USECASE_CX,
        cy: y,
        rx: USECASE_RX,
        ry: USECASE_RY,
        fill: 'none',
        stroke: 'black',
        class: 'usecase-shape',
      },
      svg,
    );
    const label = svgNode(
      'text',
      { x: USECASE_CX, y: y + 4, 'text-anchor': 'middle', class: 'usecase-label' },
      svg,
    );
    label.textContent = usecase.title;
  });

  for (const edge of model.associations) {
    svgNode(
      'line',
      {
        x1: ACTOR_X + 14,
        y1: actorY.get(edge.actor_id)!,
        x2: USECASE_CX - USECASE_RX,
        y2: usecaseY.get(edge.usecase_id)!,
        stroke: 'black',
        class: 'association-line',
      },
      svg,
    );
  }

  for (const rel of model.relations) {
    const y1 = usecaseY.get(rel.from_id)!;
    const y2 = usecaseY.get(rel.to_id)!;
    svgNode(
      'line',
      {
        x1: USECASE_CX,
        y1: y1 + (y2 > y1 ? USECASE_RY : -USECASE_RY),
        x2: USECASE_CX,
        y2: y2 + (y2 > y1 ? -USECASE_RY : USECASE_RY),
        stroke: 'black',
        'stroke-dasharray': '6 4',
        class: 'relation-arrow',
      },
      svg,
    );
    const label = svgNode(
      'text',
      {
        x: USECASE_CX + 8,
        y: (y1 + y2) / 2,
        class: 'relation-label',
      },
      svg,
    );
    label.textContent = `<<${rel.kind}>>`;
  }

  return svg;
}
